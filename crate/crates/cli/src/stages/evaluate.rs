//! Score every trained model on the held-out test shard, and pick the
//! deployed model by validation log loss.

use serde::{Deserialize, Serialize};

use hybridclf::classifiers::ModelKind;
use hybridclf::evaluate::{
    compute_metrics, confusion_matrix, log_loss, select_best, time_inference, write_confusion_csv, EnsembleDecision,
    EvalReport,
};
use hybridclf::text_prep::TokenStream;
use hybridclf::util::sha256_hex;

use super::train::{encoder_for, TrainReport, REPORT};
use super::{load_embedding, read_json, write_json, LoadedModel, Prepared};
use crate::config::{HierInference, RunConfig};
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub log_loss: Option<f64>,
    pub validation_log_loss: Option<f64>,
    pub seconds: Option<f64>,
    /// Accuracy of the other hierarchical inference rule, for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_inference_micro: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub n_test: usize,
    pub n_validation: usize,
    /// Micro precision of always predicting the largest training class.
    pub majority_baseline: f64,
    pub hierarchical_inference: HierInference,
    pub rows: Vec<SummaryRow>,
    pub decision: Option<EnsembleDecision>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub const DECISION: &str = "decision.json";
pub const SUMMARY: &str = "summary.json";

fn dataset_hash(indices: &[usize], labels: &[usize]) -> String {
    let body = serde_json::to_string(&(indices, labels)).expect("plain vectors serialise");
    sha256_hex(body.as_bytes())
}

struct Scored {
    report: EvalReport,
    alternative: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn score(
    model: &LoadedModel,
    id: &str,
    docs: &[&TokenStream],
    truth: &[usize],
    indices: &[usize],
    encoder: &crate::encode::Encoder,
    cfg: &RunConfig,
    n_labels: usize,
    timed: bool,
) -> Result<Scored, CliError> {
    let inference = cfg.evaluate.hierarchical_inference;
    let preds = model.predict(docs, encoder, inference, n_labels)?;
    let mut report = compute_metrics(truth, &preds.labels, n_labels)?;
    report.model_id = id.to_string();
    report.log_loss = Some(log_loss(truth, &preds.distribution, cfg.evaluate.clip)?);
    report.dataset_hash = Some(dataset_hash(indices, truth));
    let mut alternative = None;
    if let (LoadedModel::Hier(h), Some(meta)) = (model, &preds.meta) {
        let truth_meta: Vec<usize> = truth.iter().map(|&l| h.map.meta_of(l)).collect();
        report.meta_confusion = Some(confusion_matrix(&truth_meta, meta, h.k())?);
        let other = match inference {
            HierInference::Cascade => HierInference::MaxProb,
            HierInference::MaxProb => HierInference::Cascade,
        };
        let alt = model.predict_labels(docs, encoder, other)?;
        let hits = alt.iter().zip(truth).filter(|(p, &t)| p.0 == t).count();
        alternative = Some(hits as f64 / truth.len().max(1) as f64);
    }
    if timed {
        report.inference_time = Some(time_inference(cfg.evaluate.timing_repeats, || {
            model.predict_labels(docs, encoder, inference).map(|_| ())
        })?);
    }
    Ok(Scored { report, alternative })
}

pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut rec = StageRecorder::start(&cfg.out_dir, "evaluate", cfg.hash())?;
    let prep = Prepared::load(cfg, &mut rec)?;
    let models = RunManifest::load_verified(&cfg.out_dir, "train")?;
    for a in &models.artifacts {
        rec.consumed(a);
    }
    let models_dir = cfg.stage_dir("train");
    let trained: TrainReport = read_json(&models_dir.join(REPORT))?;
    let emb = if trained.models.iter().any(|m| !m.kind.uses_sparse_features()) {
        Some(load_embedding(cfg, &mut rec)?)
    } else {
        None
    };

    let n_labels = prep.n_labels();
    let test = prep.test(cfg)?;
    let (_, val) = prep.train_validation(cfg);
    let test_docs: Vec<&TokenStream> = test.iter().map(|&i| &prep.tokens[i]).collect();
    let test_truth: Vec<usize> = test.iter().map(|&i| prep.label(i)).collect();
    let val_docs: Vec<&TokenStream> = val.iter().map(|&i| &prep.tokens[i]).collect();
    let val_truth: Vec<usize> = val.iter().map(|&i| prep.label(i)).collect();

    let majority = (0..n_labels).max_by_key(|&c| (trained.class_counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    let majority_baseline =
        test_truth.iter().filter(|&&t| t == majority).count() as f64 / test_truth.len().max(1) as f64;

    let mut rows = Vec::new();
    let mut validation_reports = Vec::new();
    let mut warnings = Vec::new();
    for entry in &trained.models {
        let kind: ModelKind = entry.kind;
        log::info!("evaluating {kind} on {} test samples", test.len());
        let model = LoadedModel::load(&models_dir, kind, &entry.feature_hash)?;
        let encoder = encoder_for(kind, cfg, &prep, emb.as_ref());
        let scored = score(&model, kind.as_str(), &test_docs, &test_truth, &test, &encoder, cfg, n_labels, true)?;
        let r = scored.report;

        write_json(&mut rec, &format!("{kind}.json"), &r)?;
        let path = rec.path(&format!("{kind}.confusion.csv"));
        write_confusion_csv(&path, &r.confusion, prep.dict.names())?;
        rec.produced(&path)?;
        if let (Some(mc), LoadedModel::Hier(h)) = (&r.meta_confusion, &model) {
            let names: Vec<String> = (0..h.k()).map(|m| format!("meta-{m}")).collect();
            let path = rec.path(&format!("{kind}.meta_confusion.csv"));
            write_confusion_csv(&path, mc, &names)?;
            rec.produced(&path)?;
        }

        let validation_log_loss = if val.is_empty() {
            None
        } else {
            let v = score(&model, kind.as_str(), &val_docs, &val_truth, &val, &encoder, cfg, n_labels, false)?;
            let ll = v.report.log_loss;
            validation_reports.push(v.report);
            ll
        };
        rows.push(SummaryRow {
            model: kind.to_string(),
            micro_precision: r.micro_precision,
            micro_recall: r.micro_recall,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            log_loss: r.log_loss,
            validation_log_loss,
            seconds: r.inference_time.as_ref().map(|t| t.seconds),
            alternative_inference_micro: scored.alternative,
        });
    }

    let decision = if validation_reports.len() >= 2 {
        let d = select_best(&validation_reports)?;
        write_json(&mut rec, DECISION, &d)?;
        write_json(&mut rec, "validation.json", &validation_reports)?;
        Some(d)
    } else {
        let w = "model selection skipped: needs a validation split and at least two models".to_string();
        log::warn!("{w}");
        warnings.push(w);
        None
    };
    let summary = Summary {
        n_test: test.len(),
        n_validation: val.len(),
        majority_baseline,
        hierarchical_inference: cfg.evaluate.hierarchical_inference,
        rows,
        decision,
        warnings,
    };
    write_json(&mut rec, SUMMARY, &summary)?;
    rec.finish()
}
