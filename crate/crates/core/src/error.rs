use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: insufficient rows: need at least 2 data rows, found {found}")]
    InsufficientRows { path: PathBuf, found: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("solver diverged at iteration {iteration}: non-finite iterate")]
    Diverged { iteration: usize },

    #[error("model {model} requires p ≥ {required}, got p = {p}")]
    DimensionTooSmall {
        model: u8,
        required: usize,
        p: usize,
    },

    #[error("pair ({0}, {1}) is not normalized (expected i <= j)")]
    UnnormalizedPair(usize, usize),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("problem too large for dense oracle: p = {p} exceeds {limit}")]
    TooLarge { p: usize, limit: usize },

    #[error("all folds failed during cross-validation")]
    AllFoldsFailed,

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
