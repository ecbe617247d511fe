use ndarray::Array2;

use super::cbow::EmbeddingMatrix;
use crate::text_prep::TokenStream;

/// `max_len × dim` matrix of word vectors, zero-padded past `true_length`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTensor {
    pub data: Array2<f64>,
    pub true_length: usize,
}

/// Map the first `max_len` in-vocabulary tokens to their embedding rows.
/// Out-of-vocabulary tokens contribute nothing; longer documents are cut.
pub fn embed_sequence(doc: &TokenStream, emb: &EmbeddingMatrix, max_len: usize) -> SequenceTensor {
    let mut data = Array2::zeros((max_len, emb.dim()));
    let mut row = 0;
    for id in doc.tokens.iter().filter_map(|t| emb.id(t)) {
        if row == max_len {
            break;
        }
        data.row_mut(row).assign(&emb.input.row(id));
        row += 1;
    }
    SequenceTensor {
        data,
        true_length: row,
    }
}
