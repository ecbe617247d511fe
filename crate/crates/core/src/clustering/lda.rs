use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_prep::TokenStream;
use crate::util::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaParams {
    /// Document–topic prior; `None` means 50 / num_topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub top_words: usize,
    pub seed: u64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            top_words: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: Vec<String>,
    /// `topic_word[k][w]`, each row a distribution.
    pub topic_word: Vec<Vec<f64>>,
    /// Highest-weight `(word, weight)` pairs per topic, descending.
    pub top_words: Vec<Vec<(String, f64)>>,
    /// Share of all tokens assigned to each topic.
    pub topic_prior: Vec<f64>,
    /// Final topic of every token, per document.
    pub assignments: Vec<Vec<usize>>,
}

/// Collapsed Gibbs sampling.
pub fn lda_fit(documents: &[TokenStream], num_topics: usize, params: &LdaParams) -> Result<TopicModel> {
    if num_topics < 2 {
        return Err(Error::InvalidParameter(format!("LDA needs at least 2 topics, got {num_topics}")));
    }
    if documents.is_empty() || documents.iter().all(|d| d.tokens.is_empty()) {
        return Err(Error::InvalidParameter("LDA needs at least one non-empty document".into()));
    }
    let alpha = params.alpha.unwrap_or(50.0 / num_topics as f64);
    let beta = params.beta;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter("LDA priors must be positive".into()));
    }

    let mut vocabulary: Vec<String> = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let docs: Vec<Vec<usize>> = documents
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .map(|t| {
                    *ids.entry(t.as_str()).or_insert_with(|| {
                        vocabulary.push(t.clone());
                        vocabulary.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let v = vocabulary.len();
    if v < num_topics {
        log::warn!("LDA vocabulary ({v} words) is smaller than the number of topics ({num_topics})");
    }

    let k = num_topics;
    let mut rng = seeded_rng(params.seed);
    let mut n_dk = vec![vec![0usize; k]; docs.len()];
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut n_k = vec![0usize; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t][w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();

    let vbeta = v as f64 * beta;
    let mut weights = vec![0.0; k];
    for _ in 0..params.iterations {
        for (d, words) in docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let old = z[d][i];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta) / (n_k[t] as f64 + vbeta);
                    weights[t] = total;
                }
                let x = rng.random::<f64>() * total;
                let new = weights.partition_point(|&c| c <= x).min(k - 1);
                z[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let topic_word: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let denom = n_k[t] as f64 + vbeta;
            n_kw[t].iter().map(|&c| (c as f64 + beta) / denom).collect()
        })
        .collect();
    let top_words = topic_word
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..v).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.into_iter()
                .take(params.top_words)
                .map(|w| (vocabulary[w].clone(), row[w]))
                .collect()
        })
        .collect();
    let n_tokens: usize = n_k.iter().sum();
    Ok(TopicModel {
        num_topics: k,
        alpha,
        beta,
        vocabulary,
        topic_word,
        top_words,
        topic_prior: n_k.iter().map(|&c| c as f64 / n_tokens as f64).collect(),
        assignments: z,
    })
}
