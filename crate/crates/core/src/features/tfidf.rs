use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_prep::{TokenStream, Vocabulary};

/// Sparse TF-IDF weights, sorted by token id. Every in-vocabulary token of
/// the document has an entry, including zero weights for `df = N`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfVector {
    pub weights: Vec<(usize, f64)>,
}

impl TfidfVector {
    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|&(_, w)| w).sum()
    }

    pub fn get(&self, id: usize) -> f64 {
        self.weights
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|k| self.weights[k].1)
            .unwrap_or(0.0)
    }
}

/// `w = tf × ln(N / df)` for every in-vocabulary token of `doc`.
pub fn tfidf_transform(doc: &TokenStream, vocab: &Vocabulary) -> TfidfVector {
    let mut ids = vocab.encode(doc);
    ids.sort_unstable();
    let n = vocab.n_docs() as f64;
    let mut weights = Vec::new();
    for group in ids.chunk_by(|a, b| a == b) {
        let id = group[0];
        let tf = group.len() as f64;
        weights.push((id, tf * (n / vocab.df(id) as f64).ln()));
    }
    TfidfVector { weights }
}

/// Rescale every weight by the corpus-wide total so all weights sum to one.
pub fn normalize_corpus_tfidf(vectors: &[TfidfVector]) -> Result<Vec<TfidfVector>> {
    let total: f64 = vectors.iter().map(TfidfVector::sum).sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(vectors
        .iter()
        .map(|v| TfidfVector {
            weights: v.weights.iter().map(|&(i, w)| (i, w / total)).collect(),
        })
        .collect())
}
