use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    NotSymmetric {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("bad kernel file format in {path}: {reason}")]
    BadFormat { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error(
        "average evenness target {target} is unreachable; closest achievable value is {achievable}"
    )]
    TargetUnreachable { target: f64, achievable: f64 },

    #[error("infeasible dual variables: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} pair updates (violation {violation:e})")]
    SolverFailure { iterations: usize, violation: f64 },

    #[error("kernel diagonal {value} exceeds the declared bound B = {bound}")]
    BoundViolated { value: f64, bound: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bad_format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::BadFormat {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
