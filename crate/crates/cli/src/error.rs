use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hybridclf::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream artifact {path} (run `{stage}` first)")]
    MissingArtifact { stage: String, path: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Json(_) => "json",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}
