use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridclf::classifiers::ModelKind;
use hybridclf_cli::manifest::RunManifest;
use hybridclf_cli::stages::{cluster, embed, evaluate, predict, prepare, train};
use hybridclf_cli::{synth, CliError, RunConfig};

/// Route free-text service requests to departments.
#[derive(Debug, Parser)]
#[command(name = "hybridclf", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, tokenize and shard the corpus; build the vocabulary.
    Prepare,
    /// Train word embeddings.
    Embed,
    /// Build meta-class maps.
    Cluster,
    /// Train the configured model kinds.
    Train,
    /// Score models on the test shard and select the deployed one.
    Evaluate,
    /// Run prepare, embed, cluster, train and evaluate in order.
    Run,
    /// Predict departments for a file of requests (JSONL or CSV).
    Predict {
        #[arg(long)]
        input: PathBuf,
        /// JSONL destination; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Use this model instead of the evaluated winner.
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Write a seeded synthetic corpus and label dictionary.
    Synth {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        dictionary: PathBuf,
        /// TOML generator parameters; defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        themes: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(m: &RunManifest, cfg: &RunConfig) {
    println!(
        "{}: {} artifacts in {:.2}s -> {}",
        m.stage,
        m.artifacts.len(),
        m.seconds,
        cfg.stage_dir(&m.stage).display()
    );
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Config("no command given (see --help)".into()));
    };
    match command {
        Command::Prepare => report(&prepare::run(&cfg)?, &cfg),
        Command::Embed => report(&embed::run(&cfg)?, &cfg),
        Command::Cluster => report(&cluster::run(&cfg)?, &cfg),
        Command::Train => report(&train::run(&cfg)?, &cfg),
        Command::Evaluate => report(&evaluate::run(&cfg)?, &cfg),
        Command::Run => {
            report(&prepare::run(&cfg)?, &cfg);
            report(&embed::run(&cfg)?, &cfg);
            report(&cluster::run(&cfg)?, &cfg);
            report(&train::run(&cfg)?, &cfg);
            report(&evaluate::run(&cfg)?, &cfg);
        }
        Command::Predict { input, output, model } => {
            let n = predict::run(&cfg, &input, output.as_deref(), model)?;
            if let Some(o) = output {
                println!("predict: {n} requests -> {}", o.display());
            }
        }
        Command::Synth {
            corpus,
            dictionary,
            spec,
            classes,
            samples,
            themes,
        } => {
            let mut s = synth::load_spec(spec.as_deref())?;
            s.n_classes = classes.unwrap_or(s.n_classes);
            s.n_samples = samples.unwrap_or(s.n_samples);
            s.n_themes = themes.unwrap_or(s.n_themes);
            s.seed = cli.seed.unwrap_or(s.seed);
            let n = synth::write_synthetic(&s, &corpus, &dictionary)?;
            println!("synth: {n} records -> {}", corpus.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            match e {
                CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
