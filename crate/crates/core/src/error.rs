use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("line count mismatch {src} vs {reference}")]
    LineCountMismatch { src: usize, reference: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("undefined TER: empty reference")]
    EmptyReference,

    #[error("undefined correlation: constant input")]
    ConstantInput,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate correlation matrix (determinant {0})")]
    DegenerateDeterminant(f64),

    #[error("lineage violation: {0}")]
    Lineage(String),

    #[error("missing cached checkpoint: expected manifest hash {0}")]
    MissingCheckpoint(String),

    #[error("not zero-shot: test language pair {0} appears in training data")]
    NotZeroShot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
