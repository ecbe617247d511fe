//! Ingest, filter, tokenize, split and build the vocabulary.

use std::path::Path;

use serde::Serialize;

use hybridclf::corpus_io::{filter_valid, load_records, split_shards, write_valid_records, DropStats, LabelDictionary, RecordFormat};
use hybridclf::text_prep::{build_vocabulary, FilterStats, TokenStream};
use hybridclf::util::derive_seed;

use super::{io_err, write_json};
use crate::config::RunConfig;
use crate::encode::TextPipeline;
use crate::error::CliError;
use crate::manifest::{hash_file, ArtifactEntry, RunManifest, StageRecorder};

#[derive(Serialize)]
struct PrepareStats {
    n_raw: usize,
    n_valid: usize,
    dropped: DropStats,
    filtered_tokens: FilterStats,
    empty_after_filtering: usize,
    train_class_counts: Vec<usize>,
    test_class_counts: Vec<usize>,
    vocabulary_size: usize,
    warnings: Vec<String>,
}

pub fn record_format(path: &Path) -> RecordFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
        _ => RecordFormat::Jsonl,
    }
}

fn external(path: &Path) -> Result<ArtifactEntry, CliError> {
    Ok(ArtifactEntry {
        path: path.display().to_string(),
        sha256: hash_file(path)?,
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    cfg.require_inputs(true)?;
    let corpus = cfg.paths.corpus.as_deref().expect("checked");
    let dict_path = cfg.paths.dictionary.as_deref().expect("checked");
    let mut rec = StageRecorder::start(&cfg.out_dir, "prepare", cfg.hash())?;
    rec.consumed(&external(corpus)?);
    rec.consumed(&external(dict_path)?);

    let dict = LabelDictionary::load(dict_path)?;
    let raw = load_records(corpus, record_format(corpus))?;
    let (valid, dropped) = filter_valid(&raw, &dict);
    log::info!("{} of {} records valid", valid.len(), raw.len());
    if valid.is_empty() {
        return Err(hybridclf::Error::InvalidParameter("no valid records in the corpus".into()).into());
    }

    let pipeline = TextPipeline::from_config(cfg)?;
    let mut filtered = FilterStats::default();
    let tokens: Vec<TokenStream> = valid
        .iter()
        .map(|r| {
            let (t, s) = pipeline.process(&r.record.request_text);
            filtered.merge(&s);
            t
        })
        .collect();
    let empty = tokens.iter().filter(|t| t.is_empty()).count();

    let p = &cfg.prepare;
    let plan = split_shards(
        &valid,
        p.split_ratio,
        p.train_shard_size,
        p.test_shard_size,
        derive_seed(cfg.seed, "shards"),
    )?;
    let train_docs: Vec<TokenStream> = plan.train_indices(usize::MAX).iter().map(|&i| tokens[i].clone()).collect();
    let vocab = build_vocabulary(&train_docs, p.min_df)?;

    let count = |idx: Vec<usize>| {
        let mut c = vec![0; dict.len()];
        for i in idx {
            c[valid[i].canonical_label] += 1;
        }
        c
    };
    let mut warnings = plan.warnings.clone();
    if empty > 0 {
        warnings.push(format!("{empty} records have no tokens after filtering"));
    }
    let stats = PrepareStats {
        n_raw: raw.len(),
        n_valid: valid.len(),
        dropped,
        filtered_tokens: filtered,
        empty_after_filtering: empty,
        train_class_counts: count(plan.train_indices(usize::MAX)),
        test_class_counts: count(plan.test_indices(usize::MAX)),
        vocabulary_size: vocab.len(),
        warnings,
    };

    let path = rec.path("valid.jsonl");
    write_valid_records(&path, &valid)?;
    rec.produced(&path)?;
    let path = rec.path("tokens.jsonl");
    let mut text = String::new();
    for t in &tokens {
        text.push_str(&serde_json::to_string(&t.tokens)?);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(io_err(&path))?;
    rec.produced(&path)?;
    let path = rec.path("dictionary.tsv");
    dict.save(&path)?;
    rec.produced(&path)?;
    write_json(&mut rec, "shards.json", &plan)?;
    let path = rec.path("vocab.tsv");
    vocab.save(&path)?;
    rec.produced(&path)?;
    write_json(&mut rec, "stats.json", &stats)?;
    rec.finish()
}
