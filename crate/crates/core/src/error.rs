use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mismatched query sets: {0}")]
    QueryMismatch(String),

    #[error("solver failed: {0}")]
    SolverFailed(String),

    #[error("malformed document {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the optimizer.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. } | Error::SolverFailed(_))
    }
}
