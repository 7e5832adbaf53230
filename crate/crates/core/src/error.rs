use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}: price {price} is not positive")]
    NonPositivePrice { row: usize, price: f64 },
    #[error("row {row}: timestamp {timestamp} does not follow {previous}")]
    NonMonotoneTimestamp {
        row: usize,
        timestamp: String,
        previous: String,
    },
    #[error("row {row}: timestamp {timestamp} is outside every session window")]
    OutsideSession { row: usize, timestamp: String },
    #[error("row {row}: bars missing between {previous} and {timestamp}")]
    MissingBars {
        row: usize,
        timestamp: String,
        previous: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("regression design matrix is singular")]
    SingularMatrix,
    #[error("degenerate input: {0}")]
    Degenerate(String),
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
        Error::InvalidParameter(msg.into())
    }
}
