use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::entropy::{entropy_assign, AssignRule};
use super::gmm::GmmModel;
use super::lda::TopicModel;
use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;
use crate::text_prep::{tokenize, TokenStream, TokenizerPlugin};
use crate::util::{sha256_hex, squared_euclidean};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub label: usize,
    pub vector: Vec<f64>,
    /// No token of the label had an embedding.
    pub zero_vector: bool,
}

/// What a label's vector is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelVectorSource {
    /// Mean embedding of the tokens of the label's name.
    #[default]
    NameTokens,
    /// Mean over the label's training documents of their mean embeddings.
    DocumentCentroid,
}

fn from_mean(label: usize, mean: Option<ndarray::Array1<f64>>, dim: usize) -> LabelVector {
    match mean {
        Some(v) => LabelVector {
            label,
            vector: v.to_vec(),
            zero_vector: false,
        },
        None => LabelVector {
            label,
            vector: vec![0.0; dim],
            zero_vector: true,
        },
    }
}

pub fn label_vectors_from_names(
    names: &[String],
    emb: &EmbeddingMatrix,
    tokenizer: &dyn TokenizerPlugin,
) -> Vec<LabelVector> {
    names
        .iter()
        .enumerate()
        .map(|(label, name)| {
            let toks = tokenize(name, tokenizer);
            from_mean(label, emb.mean_vector(toks.tokens.iter().map(String::as_str)), emb.dim())
        })
        .collect()
}

pub fn label_vectors_from_documents(
    docs: &[TokenStream],
    labels: &[usize],
    n_labels: usize,
    emb: &EmbeddingMatrix,
) -> Vec<LabelVector> {
    let mut sums = vec![ndarray::Array1::<f64>::zeros(emb.dim()); n_labels];
    let mut counts = vec![0usize; n_labels];
    for (doc, &l) in docs.iter().zip(labels) {
        if let Some(v) = emb.mean_vector(doc.tokens.iter().map(String::as_str)) {
            sums[l] += &v;
            counts[l] += 1;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(l, (s, c))| from_mean(l, (c > 0).then(|| s / c as f64), emb.dim()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMethod {
    KmeansGmm,
    TopicEntropy,
}

impl std::str::FromStr for MetaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans_gmm" => Ok(MetaMethod::KmeansGmm),
            "topic_entropy" => Ok(MetaMethod::TopicEntropy),
            other => Err(Error::UnknownFormat(format!("meta-class method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub responsibilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub zero_vector: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub label: usize,
    pub meta: usize,
    pub diagnostics: LabelDiagnostics,
}

/// Partition of the leaf labels into K meta-classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaClassMap {
    pub method: MetaMethod,
    #[serde(rename = "K")]
    pub k: usize,
    pub assignments: Vec<LabelAssignment>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetaClassMap {
    /// A map from a plain label → meta vector, with empty diagnostics.
    pub fn from_assignment(method: MetaMethod, k: usize, meta_of: &[usize]) -> Result<Self> {
        let map = MetaClassMap {
            method,
            k,
            assignments: meta_of
                .iter()
                .enumerate()
                .map(|(label, &meta)| LabelAssignment {
                    label,
                    meta,
                    diagnostics: LabelDiagnostics::default(),
                })
                .collect(),
            provenance: BTreeMap::new(),
            warnings: Vec::new(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn n_labels(&self) -> usize {
        self.assignments.len()
    }

    pub fn meta_of(&self, label: usize) -> usize {
        self.assignments[label].meta
    }

    pub fn meta_vector(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a.meta).collect()
    }

    /// Leaf labels of a meta-class, ascending.
    pub fn members(&self, meta: usize) -> Vec<usize> {
        self.assignments.iter().filter(|a| a.meta == meta).map(|a| a.label).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for a in &self.assignments {
            s[a.meta] += 1;
        }
        s
    }

    /// Structural checks. `K = 1` is accepted (a degenerate hierarchy);
    /// clustering itself always produces at least two meta-classes.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Clustering("meta-class count K is zero".into()));
        }
        for (i, a) in self.assignments.iter().enumerate() {
            if a.label != i {
                return Err(Error::Clustering(format!("assignment {i} is for label {}", a.label)));
            }
            if a.meta >= self.k {
                return Err(Error::Clustering(format!("label {i} has meta-class {} >= K", a.meta)));
            }
        }
        if let Some(empty) = self.sizes().iter().position(|&s| s == 0) {
            return Err(Error::Clustering(format!("meta-class {empty} is empty")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialises")
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: MetaClassMap = serde_json::from_str(&text)?;
        map.validate()?;
        Ok(map)
    }
}

/// Build the map, refilling empty meta-classes: the lowest-numbered empty
/// class takes the label with the highest affinity to it among labels whose
/// class has more than one member.
pub(crate) fn finalize(
    method: MetaMethod,
    k: usize,
    labels: &[LabelVector],
    mut assignment: Vec<usize>,
    diagnostics: Vec<LabelDiagnostics>,
    affinity: &[Vec<f64>],
    provenance: BTreeMap<String, String>,
) -> Result<MetaClassMap> {
    if k < 2 {
        return Err(Error::Clustering(format!("meta-class count K={k} is below 2")));
    }
    if labels.len() < k {
        return Err(Error::Clustering(format!("{} labels cannot fill {k} meta-classes", labels.len())));
    }
    let mut warnings = Vec::new();
    loop {
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&m| sizes[m] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let donor = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| affinity[a][empty].total_cmp(&affinity[b][empty]).then(b.cmp(&a)))
            .expect("more labels than meta-classes");
        let msg = format!("meta-class {empty} was empty; moved label {} into it", labels[donor].label);
        log::warn!("{msg}");
        warnings.push(msg);
        assignment[donor] = empty;
    }
    let map = MetaClassMap {
        method,
        k,
        assignments: labels
            .iter()
            .zip(assignment)
            .zip(diagnostics)
            .map(|((lv, meta), diagnostics)| LabelAssignment {
                label: lv.label,
                meta,
                diagnostics,
            })
            .collect(),
        provenance,
        warnings,
    };
    map.validate()?;
    Ok(map)
}

/// Inputs for each meta-class construction method.
pub enum MetaInputs<'a> {
    KmeansGmm {
        labels: &'a [LabelVector],
        gmm: &'a GmmModel,
        /// Per-label silhouettes of the K-Means partition, if computed.
        silhouettes: Option<&'a [f64]>,
    },
    TopicEntropy {
        labels: &'a [LabelVector],
        topics: &'a TopicModel,
        emb: &'a EmbeddingMatrix,
        rule: AssignRule,
    },
}

pub fn build_meta_map(inputs: MetaInputs<'_>) -> Result<MetaClassMap> {
    match inputs {
        MetaInputs::KmeansGmm {
            labels,
            gmm,
            silhouettes,
        } => {
            if gmm.responsibilities.len() != labels.len() {
                return Err(Error::LengthMismatch(gmm.responsibilities.len(), labels.len()));
            }
            let assignment = gmm.hard_assignments();
            let affinity: Vec<Vec<f64>> = labels
                .iter()
                .map(|lv| gmm.means.iter().map(|m| -squared_euclidean(&lv.vector, m)).collect())
                .collect();
            let diagnostics = gmm
                .responsibilities
                .iter()
                .enumerate()
                .map(|(i, r)| LabelDiagnostics {
                    silhouette: silhouettes.map(|s| s[i]),
                    responsibilities: Some(r.clone()),
                    zero_vector: labels[i].zero_vector,
                    ..LabelDiagnostics::default()
                })
                .collect();
            let mut provenance = BTreeMap::new();
            provenance.insert("covariance".to_string(), format!("{:?}", gmm.covariance));
            finalize(
                MetaMethod::KmeansGmm,
                gmm.k(),
                labels,
                assignment,
                diagnostics,
                &affinity,
                provenance,
            )
        }
        MetaInputs::TopicEntropy {
            labels,
            topics,
            emb,
            rule,
        } => entropy_assign(labels, topics, emb, rule),
    }
}
