use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory's numerical and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at component {component}, index {index}")]
    NonFinite { component: usize, index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate sample set: {0}")]
    Degenerate(String),

    #[error("snapshot format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unstable run: {0}")]
    Unstable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
