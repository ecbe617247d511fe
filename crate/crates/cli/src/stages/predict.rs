//! Route new requests with the selected (or a named) model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use hybridclf::classifiers::ModelKind;
use hybridclf::corpus_io::{load_records, RecordFormat};
use hybridclf::evaluate::EnsembleDecision;
use hybridclf::text_prep::TokenStream;
use hybridclf::util::argmax;

use super::evaluate::DECISION;
use super::prepare::record_format;
use super::train::{encoder_for, TrainReport, REPORT};
use super::{io_err, load_embedding, read_json, LoadedModel, Prepared};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

#[derive(Debug, Serialize)]
pub struct PredictionLine {
    pub id: String,
    pub label: usize,
    pub department: String,
    pub probability: f64,
    pub model: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// A request to route; any other fields on the line are ignored, so full
/// corpus records work as input too.
#[derive(Debug, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    #[serde(default)]
    pub request: String,
}

fn read_requests(path: &Path) -> Result<Vec<PredictRequest>, CliError> {
    if record_format(path) == RecordFormat::Csv {
        return Ok(load_records(path, RecordFormat::Csv)?
            .into_iter()
            .map(|r| PredictRequest {
                id: r.id,
                request: r.request_text,
            })
            .collect());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                hybridclf::Error::MalformedRow {
                    row: i + 1,
                    message: e.to_string(),
                }
                .into()
            })
        })
        .collect()
}

fn chosen_kind(cfg: &RunConfig, explicit: Option<ModelKind>) -> Result<ModelKind, CliError> {
    if let Some(k) = explicit {
        return Ok(k);
    }
    let eval = RunManifest::load_verified(&cfg.out_dir, "evaluate")?;
    eval.artifact(DECISION)?;
    let d: EnsembleDecision = read_json(&cfg.stage_dir("evaluate").join(DECISION))?;
    d.winner
        .parse()
        .map_err(|e: hybridclf::Error| CliError::Config(format!("decision names an unknown model: {e}")))
}

/// Returns the number of requests written.
pub fn run(cfg: &RunConfig, input: &Path, output: Option<&Path>, model: Option<ModelKind>) -> Result<usize, CliError> {
    let mut rec = StageRecorder::detached(&cfg.out_dir, "predict");
    let kind = chosen_kind(cfg, model)?;
    let prep = Prepared::load(cfg, &mut rec)?;
    RunManifest::load_verified(&cfg.out_dir, "train")?;
    let models_dir = cfg.stage_dir("train");
    let trained: TrainReport = read_json(&models_dir.join(REPORT))?;
    let entry = trained
        .models
        .iter()
        .find(|m| m.kind == kind)
        .ok_or_else(|| CliError::MissingArtifact {
            stage: "train".into(),
            path: models_dir.join(super::model_path(kind)).display().to_string(),
        })?;
    let emb = if kind.uses_sparse_features() {
        None
    } else {
        Some(load_embedding(cfg, &mut rec)?)
    };
    let loaded = LoadedModel::load(&models_dir, kind, &entry.feature_hash)?;
    let encoder = encoder_for(kind, cfg, &prep, emb.as_ref());
    let pipeline = crate::encode::TextPipeline::from_config(cfg)?;
    let prior_label = argmax(&trained.class_counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let total: usize = trained.class_counts.iter().sum();
    let prior_p = trained.class_counts[prior_label] as f64 / total.max(1) as f64;

    let records = read_requests(input)?;
    let docs: Vec<TokenStream> = records.iter().map(|r| pipeline.process(&r.request).0).collect();
    let usable: Vec<usize> = (0..docs.len()).filter(|&i| !encoder.is_empty(&docs[i])).collect();
    let refs: Vec<&TokenStream> = usable.iter().map(|&i| &docs[i]).collect();
    let decided = loaded.predict_labels(&refs, &encoder, cfg.evaluate.hierarchical_inference)?;
    let mut by_index = vec![None; docs.len()];
    for (&i, d) in usable.iter().zip(decided) {
        by_index[i] = Some(d);
    }

    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(io_err(p))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for (r, d) in records.iter().zip(by_index) {
        let (label, probability, flags) = match d {
            Some((l, p, _)) => (l, p, Vec::new()),
            None => (prior_label, prior_p, vec!["no_features".to_string()]),
        };
        let line = PredictionLine {
            id: r.id.clone(),
            label,
            department: prep.dict.name(label).to_string(),
            probability,
            model: kind.to_string(),
            flags,
        };
        let text = serde_json::to_string(&line)?;
        writeln!(out, "{text}").map_err(|e| hybridclf::Error::io(output.unwrap_or(Path::new("<stdout>")), e))?;
    }
    out.flush().map_err(|e| hybridclf::Error::io(output.unwrap_or(Path::new("<stdout>")), e))?;
    Ok(records.len())
}
