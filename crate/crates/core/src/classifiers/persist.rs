//! Self-describing binary container for a single classifier.
//!
//! Layout: 8-byte magic, little-endian `u32` header length, a JSON header,
//! then every parameter array as little-endian `f64`, in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ClassifierModel, ConstantModel};
use super::nb::{BernoulliNbModel, NbParams};
use super::network::{Architecture, NeuralModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HYBCLFv1";
pub const FORMAT_VERSION: u32 = 1;

/// Hashes of the artifacts a model depends on. `None` on the expected side
/// skips that check.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHashes {
    pub vocab: Option<String>,
    pub meta_map: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: String,
    pub version: u32,
    pub classes: Vec<usize>,
    pub shapes: Vec<Vec<usize>>,
    pub vocab_hash: Option<String>,
    pub meta_map_hash: Option<String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NbConfig {
    params: NbParams,
    n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct NeuralConfig {
    arch: Architecture,
    input_shape: Vec<usize>,
}

fn arrays(model: &mut ClassifierModel) -> (Vec<Vec<usize>>, Vec<f64>) {
    let mut shapes = Vec::new();
    let mut blob = Vec::new();
    let mut push = |shape: Vec<usize>, values: &mut dyn Iterator<Item = f64>| {
        shapes.push(shape);
        blob.extend(values);
    };
    match model {
        ClassifierModel::Nb(m) => {
            let c = m.classes.len();
            push(vec![c], &mut m.log_prior.iter().copied());
            push(vec![m.n_features, c], &mut m.log_p.iter().copied());
            push(vec![m.log_q.len() / c.max(1), c], &mut m.log_q.iter().copied());
        }
        ClassifierModel::Mlp(m) | ClassifierModel::ResCnn(m) => {
            for p in m.net.params() {
                push(p.value.shape().to_vec(), &mut p.value.iter().copied());
            }
        }
        ClassifierModel::Constant(m) => push(vec![m.proba.len()], &mut m.proba.iter().copied()),
    }
    (shapes, blob)
}

pub fn save_model(path: &Path, model: &ClassifierModel, hashes: &ModelHashes) -> Result<()> {
    let mut model = model.clone();
    let (shapes, blob) = arrays(&mut model);
    let config = match &model {
        ClassifierModel::Nb(m) => serde_json::to_value(NbConfig {
            params: m.params.clone(),
            n_features: m.n_features,
        })?,
        ClassifierModel::Mlp(m) | ClassifierModel::ResCnn(m) => serde_json::to_value(NeuralConfig {
            arch: m.arch.clone(),
            input_shape: m.input_shape.clone(),
        })?,
        ClassifierModel::Constant(_) => serde_json::Value::Null,
    };
    let header = ModelHeader {
        kind: model.kind_name().to_string(),
        version: FORMAT_VERSION,
        classes: super::Predictor::classes(&model).to_vec(),
        shapes,
        vocab_hash: hashes.vocab.clone(),
        meta_map_hash: hashes.meta_map.clone(),
        config,
        loss_trace: model.loss_trace().to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(12 + json.len() + 8 * blob.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn check_hash(what: &str, expected: &Option<String>, found: &Option<String>) -> Result<()> {
    match (expected, found) {
        (Some(e), f) if f.as_ref() != Some(e) => Err(Error::HashMismatch {
            what: what.into(),
            expected: e.clone(),
            found: f.clone().unwrap_or_else(|| "none".into()),
        }),
        _ => Ok(()),
    }
}

pub fn read_header(bytes: &[u8]) -> Result<(ModelHeader, &[u8])> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + n)
        .ok_or_else(|| Error::ModelFormat("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(body)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {}", header.version)));
    }
    Ok((header, &bytes[12 + n..]))
}

/// Load a model, refusing it when its recorded artifact hashes differ from
/// the expected ones.
pub fn load_model(path: &Path, expected: &ModelHashes) -> Result<(ClassifierModel, ModelHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, rest) = read_header(&bytes)?;
    check_hash("vocabulary", &expected.vocab, &header.vocab_hash)?;
    check_hash("meta-class map", &expected.meta_map, &header.meta_map_hash)?;

    let total: usize = header.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if rest.len() != total * 8 {
        return Err(Error::ModelFormat(format!(
            "expected {} parameter bytes, found {}",
            total * 8,
            rest.len()
        )));
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut chunks = Vec::new();
    let mut at = 0;
    for s in &header.shapes {
        let n: usize = s.iter().product();
        chunks.push(&values[at..at + n]);
        at += n;
    }
    let classes = header.classes.clone();
    let shape_err = || Error::ModelFormat("parameter shapes do not match the architecture".into());

    let model = match header.kind.as_str() {
        "nb" => {
            let cfg: NbConfig = serde_json::from_value(header.config.clone())?;
            let [prior, p, q] = chunks[..] else {
                return Err(shape_err());
            };
            if p.len() != cfg.n_features * classes.len() || prior.len() != classes.len() {
                return Err(shape_err());
            }
            ClassifierModel::Nb(BernoulliNbModel::from_tables(
                cfg.params,
                classes,
                cfg.n_features,
                prior.to_vec(),
                p.to_vec(),
                q.to_vec(),
            ))
        }
        "mlp" | "rescnn" => {
            let cfg: NeuralConfig = serde_json::from_value(header.config.clone())?;
            let mut m = NeuralModel::rebuild(&cfg.arch, &cfg.input_shape, &classes)?;
            {
                let params = m.net.params();
                if params.len() != chunks.len() {
                    return Err(shape_err());
                }
                for (p, (chunk, shape)) in params.into_iter().zip(chunks.iter().zip(&header.shapes)) {
                    if p.value.shape() != shape.as_slice() {
                        return Err(shape_err());
                    }
                    p.value.iter_mut().zip(chunk.iter()).for_each(|(d, s)| *d = *s);
                }
            }
            m.loss_trace = header.loss_trace.clone();
            if header.kind == "mlp" {
                ClassifierModel::Mlp(m)
            } else {
                ClassifierModel::ResCnn(m)
            }
        }
        "constant" => {
            let [proba] = chunks[..] else {
                return Err(shape_err());
            };
            ClassifierModel::Constant(ConstantModel {
                classes,
                proba: proba.to_vec(),
            })
        }
        other => return Err(Error::ModelFormat(format!("unknown model kind `{other}`"))),
    };
    Ok((model, header))
}
