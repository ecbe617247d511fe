use serde::{Deserialize, Serialize};

use super::lda::TopicModel;
use super::meta::{finalize, LabelDiagnostics, LabelVector, MetaClassMap, MetaMethod};
use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;
use crate::util::{argmax, cosine};

/// How a label picks its topic from the similarity distribution `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignRule {
    /// Minimal `-p ln p`; ties go to the larger `p`, then the lower index.
    #[default]
    MinEntropy,
    /// Largest `p`; ties go to the lower index.
    MaxProb,
}

/// `-p ln p` with `0 ln 0 = 0`.
pub fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Per-topic entropy terms and the chosen topic for one label.
pub fn entropy_choice(p: &[f64], rule: AssignRule) -> (usize, Vec<f64>) {
    let e: Vec<f64> = p.iter().map(|&x| entropy_term(x)).collect();
    let chosen = match rule {
        AssignRule::MaxProb => argmax(p),
        AssignRule::MinEntropy => {
            let mut best = 0;
            for i in 1..p.len() {
                if e[i] < e[best] || (e[i] == e[best] && p[i] > p[best]) {
                    best = i;
                }
            }
            best
        }
    };
    (chosen, e)
}

/// Weight-normalised mean of the embeddings of a topic's top words.
pub fn topic_centroids(topics: &TopicModel, emb: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    topics
        .top_words
        .iter()
        .enumerate()
        .map(|(i, words)| {
            let mut c = vec![0.0; emb.dim()];
            let mut total = 0.0;
            for (w, weight) in words {
                if let Some(v) = emb.vector(w) {
                    for (ci, x) in c.iter_mut().zip(v) {
                        *ci += weight * x;
                    }
                    total += weight;
                }
            }
            if total == 0.0 {
                return Err(Error::Clustering(format!("topic {i} has no top word with an embedding")));
            }
            c.iter_mut().for_each(|x| *x /= total);
            Ok(c)
        })
        .collect()
}

/// Similarity distribution of a vector over topic centroids, using
/// cosine shifted to [0, 1].
pub fn topic_distribution(vector: &[f64], centroids: &[Vec<f64>]) -> Vec<f64> {
    let sims: Vec<f64> = centroids.iter().map(|c| (1.0 + cosine(vector, c)) / 2.0).collect();
    let total: f64 = sims.iter().sum();
    if total > 0.0 {
        sims.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / centroids.len() as f64; centroids.len()]
    }
}

/// Assign each label to a topic via the entropy of its topic-similarity
/// distribution. Labels with a zero vector take the topic with the largest
/// prior and are flagged.
pub fn entropy_assign(
    labels: &[LabelVector],
    topics: &TopicModel,
    emb: &EmbeddingMatrix,
    rule: AssignRule,
) -> Result<MetaClassMap> {
    if topics.num_topics < 2 {
        return Err(Error::Clustering(format!("need at least 2 topics, got {}", topics.num_topics)));
    }
    let centroids = topic_centroids(topics, emb)?;
    let mut assignment = Vec::with_capacity(labels.len());
    let mut diagnostics = Vec::with_capacity(labels.len());
    let mut affinity = Vec::with_capacity(labels.len());
    for lv in labels {
        let p = topic_distribution(&lv.vector, &centroids);
        let (chosen, e) = entropy_choice(&p, rule);
        let chosen = if lv.zero_vector {
            log::warn!("label {} has no embedded tokens; assigned by topic prior", lv.label);
            argmax(&topics.topic_prior)
        } else {
            chosen
        };
        assignment.push(chosen);
        affinity.push(p.clone());
        diagnostics.push(LabelDiagnostics {
            p: Some(p),
            e: Some(e),
            zero_vector: lv.zero_vector,
            ..LabelDiagnostics::default()
        });
    }
    let mut provenance = std::collections::BTreeMap::new();
    provenance.insert("assign_rule".to_string(), format!("{rule:?}"));
    provenance.insert("num_topics".to_string(), topics.num_topics.to_string());
    finalize(
        MetaMethod::TopicEntropy,
        topics.num_topics,
        labels,
        assignment,
        diagnostics,
        &affinity,
        provenance,
    )
}
