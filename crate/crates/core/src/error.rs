use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("unknown format: {0}")]
    UnknownFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible synthetic corpus specification: {0}")]
    InfeasibleSpec(String),
    #[error("empty vocabulary after pruning (min_df = {min_df})")]
    EmptyVocabulary { min_df: usize },
    #[error("overlapping histogram buckets: {0}")]
    OverlappingBuckets(String),
    #[error("all weights are zero; nothing to normalize")]
    AllZero,
    #[error("degenerate table: {0}")]
    DegenerateTable(String),
    #[error("clustering failed: {0}")]
    Clustering(String),
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("row {row} is not a probability distribution (sum = {sum})")]
    NotADistribution { row: usize, sum: f64 },
    #[error("hash mismatch for {what}: expected {expected}, found {found}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("model format error: {0}")]
    ModelFormat(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedRow { .. } => "malformed_row",
            Error::UnknownFormat(_) => "unknown_format",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InfeasibleSpec(_) => "infeasible_spec",
            Error::EmptyVocabulary { .. } => "empty_vocabulary",
            Error::OverlappingBuckets(_) => "overlapping_buckets",
            Error::AllZero => "all_zero",
            Error::DegenerateTable(_) => "degenerate_table",
            Error::Clustering(_) => "clustering",
            Error::EmptyClass(_) => "empty_class",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Diverged { .. } => "diverged",
            Error::LengthMismatch(..) => "length_mismatch",
            Error::NotADistribution { .. } => "not_a_distribution",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::ModelFormat(_) => "model_format",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
