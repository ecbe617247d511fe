//! Feature construction: TF-IDF weighting, tag-combo weight of evidence and
//! information value, CBOW word embeddings and fixed-shape sequence tensors.

mod cbow;
mod sequence;
mod tfidf;
mod woe;

pub use cbow::{cbow_example_grad, cbow_train, context_blocks, CbowConfig, CbowGrad, EmbeddingMatrix};
pub use sequence::{embed_sequence, SequenceTensor};
pub use tfidf::{normalize_corpus_tfidf, tfidf_transform, TfidfVector};
pub use woe::{
    build_tag_combo_table, combo_key, compute_woe_iv, IvReport, IvStrength, TagComboTable, WoeMode,
};
