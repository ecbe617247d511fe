//! The six pipeline stages plus the shared loaders they use to read
//! upstream artifacts (always through verified manifests).

pub mod cluster;
pub mod embed;
pub mod evaluate;
pub mod predict;
pub mod prepare;
pub mod train;

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use hybridclf::classifiers::{ClassifierModel, Features, ModelHashes, ModelKind, Predictor};
use hybridclf::clustering::MetaClassMap;
use hybridclf::corpus_io::{read_valid_records, LabelDictionary, ShardPlan, ValidRecord};
use hybridclf::features::EmbeddingMatrix;
use hybridclf::hierarchy::{infer_cascade, infer_max_prob, load_hierarchy, HierarchicalModel};
use hybridclf::text_prep::{TokenStream, Vocabulary};
use hybridclf::util::argmax;

use crate::config::{HierInference, RunConfig};
use crate::encode::Encoder;
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> hybridclf::Error + '_ {
    move |e| hybridclf::Error::io(path, e)
}

pub(crate) fn write_json<T: Serialize>(rec: &mut StageRecorder, name: &str, value: &T) -> Result<(), CliError> {
    let path = rec.path(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    rec.produced(&path)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Everything `prepare` produced.
pub struct Prepared {
    pub records: Vec<ValidRecord>,
    pub tokens: Vec<TokenStream>,
    pub dict: LabelDictionary,
    pub plan: ShardPlan,
    pub vocab: Vocabulary,
    pub manifest: RunManifest,
}

impl Prepared {
    pub fn load(cfg: &RunConfig, rec: &mut StageRecorder) -> Result<Self, CliError> {
        let manifest = RunManifest::load_verified(&cfg.out_dir, "prepare")?;
        let dir = cfg.stage_dir("prepare");
        for name in ["valid.jsonl", "tokens.jsonl", "dictionary.tsv", "shards.json", "vocab.tsv"] {
            rec.consumed(manifest.artifact(name)?);
        }
        let records = read_valid_records(&dir.join("valid.jsonl"))?;
        let path = dir.join("tokens.jsonl");
        let file = std::fs::File::open(&path).map_err(io_err(&path))?;
        let tokens = BufReader::new(file)
            .lines()
            .map(|l| {
                let l = l.map_err(io_err(&path))?;
                Ok(TokenStream::new(serde_json::from_str(&l)?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        if tokens.len() != records.len() {
            return Err(hybridclf::Error::LengthMismatch(tokens.len(), records.len()).into());
        }
        Ok(Prepared {
            records,
            tokens,
            dict: LabelDictionary::load(&dir.join("dictionary.tsv"))?,
            plan: read_json(&dir.join("shards.json"))?,
            vocab: Vocabulary::load(&dir.join("vocab.tsv"))?,
            manifest,
        })
    }

    pub fn n_labels(&self) -> usize {
        self.dict.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.records[i].canonical_label
    }

    /// Training and validation indices: the validation set is the tail of
    /// the (already shuffled) selected training shards.
    pub fn train_validation(&self, cfg: &RunConfig) -> (Vec<usize>, Vec<usize>) {
        let mut train = self.plan.train_indices(cfg.train.train_shards);
        let n_val = (train.len() as f64 * cfg.train.validation_fraction).round() as usize;
        let val = train.split_off(train.len() - n_val);
        (train, val)
    }

    pub fn test(&self, cfg: &RunConfig) -> Result<Vec<usize>, CliError> {
        self.plan
            .test_shards
            .get(cfg.evaluate.test_shard)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("test shard {} does not exist", cfg.evaluate.test_shard)))
    }
}

pub fn load_embedding(cfg: &RunConfig, rec: &mut StageRecorder) -> Result<EmbeddingMatrix, CliError> {
    let manifest = RunManifest::load_verified(&cfg.out_dir, "embed")?;
    rec.consumed(manifest.artifact("embeddings.txt")?);
    Ok(EmbeddingMatrix::load(&cfg.stage_dir("embed").join("embeddings.txt"))?)
}

pub fn load_meta_map(cfg: &RunConfig, rec: &mut StageRecorder) -> Result<MetaClassMap, CliError> {
    let manifest = RunManifest::load_verified(&cfg.out_dir, "cluster")?;
    rec.consumed(manifest.artifact("meta_map.json")?);
    Ok(MetaClassMap::load(&cfg.stage_dir("cluster").join("meta_map.json"))?)
}

/// The feature snapshot a model family depends on: the vocabulary for
/// naive Bayes, the embedding matrix for the networks.
pub fn feature_hash(kind: ModelKind, vocab: &Vocabulary, emb: Option<&EmbeddingMatrix>) -> String {
    if kind.uses_sparse_features() {
        vocab.content_hash()
    } else {
        emb.expect("networks need embeddings").content_hash()
    }
}

pub fn model_path(kind: ModelKind) -> String {
    if kind.is_hierarchical() {
        kind.as_str().to_string()
    } else {
        format!("{}.bin", kind.as_str())
    }
}

pub enum LoadedModel {
    Flat(ClassifierModel),
    Hier(HierarchicalModel),
}

impl LoadedModel {
    pub fn load(dir: &Path, kind: ModelKind, feature_hash: &str) -> Result<Self, CliError> {
        let path = dir.join(model_path(kind));
        if kind.is_hierarchical() {
            Ok(LoadedModel::Hier(load_hierarchy(&path, Some(feature_hash))?))
        } else {
            let hashes = ModelHashes {
                vocab: Some(feature_hash.to_string()),
                meta_map: None,
            };
            Ok(LoadedModel::Flat(hybridclf::classifiers::load_model(&path, &hashes)?.0))
        }
    }
}

/// Label decisions plus full distributions over all `n_labels` labels.
pub struct Predictions {
    pub labels: Vec<usize>,
    pub probability: Vec<f64>,
    pub distribution: Vec<Vec<f64>>,
    pub meta: Option<Vec<usize>>,
}

const CHUNK: usize = 256;

pub fn expand(classes: &[usize], p: &[f64], n_labels: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_labels];
    for (&c, &v) in classes.iter().zip(p) {
        out[c] = v;
    }
    out
}

impl LoadedModel {
    /// Decisions only (what a deployed dispatcher would run).
    pub fn predict_labels(
        &self,
        docs: &[&TokenStream],
        encoder: &Encoder,
        inference: HierInference,
    ) -> hybridclf::Result<Vec<(usize, f64, Option<usize>)>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(CHUNK) {
            let feats: Vec<Features> = chunk.iter().map(|d| encoder.encode(d)).collect();
            let xs: Vec<&Features> = feats.iter().collect();
            match self {
                LoadedModel::Flat(m) => {
                    for p in m.predict_proba_batch(&xs)? {
                        let j = argmax(&p);
                        out.push((m.classes()[j], p[j], None));
                    }
                }
                LoadedModel::Hier(h) => {
                    let preds = match inference {
                        HierInference::Cascade => infer_cascade(h, &xs)?,
                        HierInference::MaxProb => infer_max_prob(h, &xs)?,
                    };
                    out.extend(preds.into_iter().map(|p| (p.label, p.probability, Some(p.meta))));
                }
            }
        }
        Ok(out)
    }

    pub fn predict(
        &self,
        docs: &[&TokenStream],
        encoder: &Encoder,
        inference: HierInference,
        n_labels: usize,
    ) -> hybridclf::Result<Predictions> {
        let decided = self.predict_labels(docs, encoder, inference)?;
        let mut distribution = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(CHUNK) {
            let feats: Vec<Features> = chunk.iter().map(|d| encoder.encode(d)).collect();
            let xs: Vec<&Features> = feats.iter().collect();
            match self {
                LoadedModel::Flat(m) => distribution.extend(
                    m.predict_proba_batch(&xs)?
                        .iter()
                        .map(|p| expand(m.classes(), p, n_labels)),
                ),
                LoadedModel::Hier(h) => distribution.extend(h.predict_distribution(&xs)?),
            }
        }
        let meta = match self {
            LoadedModel::Hier(_) => Some(decided.iter().map(|d| d.2.unwrap()).collect()),
            LoadedModel::Flat(_) => None,
        };
        Ok(Predictions {
            labels: decided.iter().map(|d| d.0).collect(),
            probability: decided.iter().map(|d| d.1).collect(),
            distribution,
            meta,
        })
    }
}
