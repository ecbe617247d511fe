//! Fit every configured model family on the training split.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use hybridclf::classifiers::{save_model, ClassifierModel, FitConfig, InputSpec, ModelHashes, ModelKind};
use hybridclf::features::EmbeddingMatrix;
use hybridclf::hierarchy::{save_hierarchy, train_hierarchical, HierarchyConfig};
use hybridclf::util::derive_seed;

use super::{feature_hash, load_embedding, load_meta_map, model_path, write_json, Prepared};
use crate::config::RunConfig;
use crate::encode::{EncodedSet, Encoder};
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: ModelKind,
    pub feature_hash: String,
    pub seconds: f64,
    /// Per-epoch loss; for hierarchies, the meta model's.
    pub loss_trace: Vec<f64>,
    #[serde(default)]
    pub leaf_loss_traces: Vec<Vec<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_validation: usize,
    /// Training-set label counts (the fallback for featureless requests).
    pub class_counts: Vec<usize>,
    pub models: Vec<KindReport>,
}

pub const REPORT: &str = "train_report.json";

pub fn encoder_for<'a>(
    kind: ModelKind,
    cfg: &RunConfig,
    prep: &'a Prepared,
    emb: Option<&'a EmbeddingMatrix>,
) -> Encoder<'a> {
    if kind.uses_sparse_features() {
        Encoder::Sparse {
            vocab: &prep.vocab,
            mode: cfg.train.nb.mode,
        }
    } else {
        Encoder::Sequence {
            emb: emb.expect("networks need embeddings"),
            max_len: cfg.embed.max_len,
        }
    }
}

pub fn input_spec(cfg: &RunConfig, prep: &Prepared, emb: Option<&EmbeddingMatrix>) -> InputSpec {
    InputSpec {
        n_features: prep.vocab.len(),
        sequence: (cfg.embed.max_len, emb.map_or(0, EmbeddingMatrix::dim)),
    }
}

fn fit_config(cfg: &RunConfig, kind: ModelKind) -> FitConfig {
    let t = &cfg.train;
    let mut train = match (kind, &t.rescnn_optimizer) {
        (ModelKind::ResCnn, Some(o)) => o.clone(),
        _ => t.optimizer.clone(),
    };
    train.seed = derive_seed(cfg.seed, kind.as_str());
    FitConfig {
        nb: t.nb.clone(),
        mlp: t.mlp.clone(),
        rescnn: t.rescnn.clone(),
        train,
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut rec = StageRecorder::start(&cfg.out_dir, "train", cfg.hash())?;
    let prep = Prepared::load(cfg, &mut rec)?;
    let kinds = &cfg.train.kinds;
    let emb = if kinds.iter().any(|k| !k.uses_sparse_features()) {
        Some(load_embedding(cfg, &mut rec)?)
    } else {
        None
    };
    let map = if kinds.iter().any(|k| k.is_hierarchical()) {
        Some(load_meta_map(cfg, &mut rec)?)
    } else {
        None
    };
    let (train, val) = prep.train_validation(cfg);
    let labels: Vec<usize> = train.iter().map(|&i| prep.label(i)).collect();
    let mut class_counts = vec![0; prep.n_labels()];
    for &l in &labels {
        class_counts[l] += 1;
    }
    let input = input_spec(cfg, &prep, emb.as_ref());

    let mut reports = Vec::new();
    for &kind in kinds {
        log::info!("training {kind} on {} samples", train.len());
        let started = Instant::now();
        let encoder = encoder_for(kind, cfg, &prep, emb.as_ref());
        let set = EncodedSet {
            docs: train.iter().map(|&i| &prep.tokens[i]).collect(),
            labels: labels.clone(),
            encoder: &encoder,
        };
        let fhash = feature_hash(kind, &prep.vocab, emb.as_ref());
        let fit = fit_config(cfg, kind);
        let path = rec.path(&model_path(kind));
        let mut report = KindReport {
            kind,
            feature_hash: fhash.clone(),
            seconds: 0.0,
            loss_trace: Vec::new(),
            leaf_loss_traces: Vec::new(),
            warnings: Vec::new(),
        };
        if kind.is_hierarchical() {
            let hcfg = HierarchyConfig {
                fit,
                membership: cfg.train.membership,
            };
            let h = train_hierarchical(kind, &set, map.as_ref().expect("loaded"), input, &hcfg)?;
            if path.exists() {
                std::fs::remove_dir_all(&path).map_err(super::io_err(&path))?;
            }
            for p in save_hierarchy(&path, &h, Some(&fhash))? {
                rec.produced(&p)?;
            }
            report.loss_trace = h.meta_model.loss_trace().to_vec();
            report.leaf_loss_traces = h.leaf_models.iter().map(|m| m.loss_trace().to_vec()).collect();
            report.warnings = h.warnings.clone();
        } else {
            let model = ClassifierModel::fit(kind, &set, input, &fit)?;
            if let ClassifierModel::Constant(_) = model {
                report.warnings.push("fewer than two classes present; constant model".into());
            }
            let hashes = ModelHashes {
                vocab: Some(fhash),
                meta_map: None,
            };
            save_model(&path, &model, &hashes)?;
            rec.produced(&path)?;
            report.loss_trace = model.loss_trace().to_vec();
        }
        report.seconds = started.elapsed().as_secs_f64();
        reports.push(report);
    }

    let report = TrainReport {
        n_train: train.len(),
        n_validation: val.len(),
        class_counts,
        models: reports,
    };
    write_json(&mut rec, REPORT, &report)?;
    rec.finish()
}
