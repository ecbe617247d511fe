//! Hybrid text classification for routing free-text requests to the
//! responsible department.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus_io`]: record ingestion, validity filtering, label
//!   canonicalisation, shard splitting and synthetic corpora.
//! * [`text_prep`]: tokenization, token filtering, vocabulary and inverted index.
//! * [`features`]: TF-IDF, weight-of-evidence / information value analysis,
//!   CBOW embeddings and fixed-shape sequence tensors.
//! * [`clustering`]: meta-class generation (K-Means/GMM and OPTICS/LDA/entropy).
//! * [`classifiers`]: Bernoulli naive Bayes, MLP and residual CNN.
//! * [`hierarchy`]: two-level meta/leaf training and inference.
//! * [`evaluate`]: precision/recall, log loss, timing and best-model selection.

pub mod classifiers;
pub mod clustering;
pub mod corpus_io;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod hierarchy;
pub mod text_prep;
pub mod util;

pub use error::{Error, Result};
