use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("exterior mass at node {node} is {value:.3e}; the grid is too coarse for the kernel")]
    ExteriorMassNegative { node: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected} nodal values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite right-hand side at component {index}")]
    NumericalOverflow { index: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("singular linear system at pivot {0}")]
    SingularMatrix(usize),

    #[error("fit window holds {found} samples, at least {required} are needed")]
    InsufficientWindow { found: usize, required: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("classification unresolved at lambda={lambda}, mu={mu} after t_max escalation")]
    Unresolved { lambda: f64, mu: f64 },

    #[error("delta sweep too coarse: {0}")]
    SweepTooCoarse(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    pub(crate) fn config(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.into(),
            message: message.into(),
        }
    }
}
