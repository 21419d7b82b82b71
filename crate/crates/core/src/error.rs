//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate chunk id: {0}")]
    DuplicateId(String),

    #[error("unknown chunk id: {0}")]
    UnknownId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend lacks capability: {0}")]
    Capability(String),

    /// Remote call failed. `retryable` drives the backoff loop.
    #[error("remote request failed (status {status:?}): {message}")]
    Remote {
        status: Option<u16>,
        message: String,
        retryable: bool,
    },

    #[error("cache file corrupt: {path}")]
    CacheCorrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("non-finite value in {0}; the log-sum-exp path cannot represent this input")]
    NonFinite(String),

    #[error("training aborted: non-finite loss at {0}")]
    TrainingDiverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
