use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate question id `{0}`")]
    DuplicateId(String),

    #[error("malformed row on line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("missing header: {0}")]
    MissingHeader(String),

    #[error("model missing: {0}")]
    ModelMissing(String),

    #[error("store missing: {0}")]
    StoreMissing(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid feature vector: {0}")]
    InvalidFeatureVector(String),

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("question `{id}`: {source}")]
    Question { id: String, source: Box<Error> },

    #[error(transparent)]
    Tabular(#[from] extgate_tabular::TabularError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_question(self, id: &str) -> Self {
        Error::Question {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
