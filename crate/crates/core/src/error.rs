use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error(
        "spectrum is not Hermitian-symmetric at bin ({row}, {col}): relative deviation {deviation:.3e}"
    )]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty sample memory")]
    EmptyMemory,

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("non-finite value during iteration {iteration} of the linear solve")]
    SolverNonFinite { iteration: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
