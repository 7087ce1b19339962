use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented invariant.
    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Cholesky factorization failed even after jitter escalation.
    #[error("kernel matrix is not positive definite (noise escalated to {noise2:e})")]
    NotPositiveDefinite { noise2: f64 },

    #[error("GP model has no training data")]
    Unfitted,

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("config validation error: {0}")]
    ConfigInvalid(String),

    #[error("trace format error at line {line}: {message}")]
    Trace { line: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
