use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: feature index {index} outside model dimension {dim}")]
    DimensionMismatch { index: usize, dim: usize },
    #[error("non-finite feature value at example {example}")]
    NonFinite { example: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty corpus after filtering")]
    EmptyCorpus,
    #[error("author {0} has no friends in the graph")]
    NoFriends(String),
    #[error("author {0} uses no marker tokens")]
    NoMarkers(String),
    #[error("zero variance in series")]
    ZeroVariance,
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("infeasible degree constraints: {0}")]
    InfeasibleDegrees(String),
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
