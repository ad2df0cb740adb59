use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("svd did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("no observations")]
    NoObservations,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("degenerate reference matrix: every pair has zero distance")]
    DegenerateReference,

    #[error("no kept components")]
    NoKeptComponents,

    #[error("bound undefined at zero threshold")]
    ZeroThreshold,

    #[error("insufficient observations: need at least {needed}, have {have}")]
    InsufficientObservations { needed: usize, have: usize },

    #[error("could not draw {wanted} pairs with nonzero distance after {attempts} attempts")]
    RetriesExhausted { wanted: usize, attempts: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset not found at {path}: {hint}")]
    MissingDataset { path: PathBuf, hint: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn dims(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Dimension {
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. } | Error::RetriesExhausted { .. } => 2,
            Error::Io { .. } | Error::MissingDataset { .. } => 3,
            _ => 1,
        }
    }
}
