//! CBOW word vectors over the training documents.

use serde::Serialize;

use hybridclf::features::cbow_train;
use hybridclf::text_prep::TokenStream;
use hybridclf::util::derive_seed;

use super::{write_json, Prepared};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

#[derive(Serialize)]
struct EmbedReport {
    n_documents: usize,
    vocabulary_size: usize,
    dim: usize,
    seed: u64,
    loss_trace: Vec<f64>,
}

pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut rec = StageRecorder::start(&cfg.out_dir, "embed", cfg.hash())?;
    let prep = Prepared::load(cfg, &mut rec)?;
    let (train, _) = prep.train_validation(cfg);
    let docs: Vec<TokenStream> = train.iter().map(|&i| prep.tokens[i].clone()).collect();

    let mut cbow = cfg.embed.cbow.clone();
    cbow.seed = derive_seed(cfg.seed, "cbow");
    let emb = cbow_train(&docs, &prep.vocab, &cbow)?;

    let path = rec.path("embeddings.txt");
    emb.save(&path)?;
    rec.produced(&path)?;
    let report = EmbedReport {
        n_documents: docs.len(),
        vocabulary_size: emb.len(),
        dim: emb.dim(),
        seed: cbow.seed,
        loss_trace: emb.loss_trace.clone(),
    };
    write_json(&mut rec, "report.json", &report)?;
    rec.finish()
}
