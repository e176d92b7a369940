use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the HP-GMN library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid split {split_id}: {message}")]
    InvalidSplit { split_id: usize, message: String },

    #[error("undefined homophily: {0}")]
    UndefinedHomophily(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no local statistic enabled")]
    NoStatisticEnabled,

    #[error("estimator diverged at epoch {epoch}")]
    EstimatorDiverged { epoch: usize },

    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("bad binary format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
