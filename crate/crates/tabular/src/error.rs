use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: String, reason: String },

    #[error("empty grid for family `{0}`")]
    EmptyGrid(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid config: {0}")]
    GridConfig(String),

    #[error("artifact: {0}")]
    Artifact(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TabularError>;

impl TabularError {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        TabularError::InvalidHyperparameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
