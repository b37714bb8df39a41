use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("malformed audio file {path:?}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("unsupported audio encoding in {path:?}: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },
    #[error("cannot normalize a silent clip")]
    SilentClip,
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("no tempo detected (flat onset envelope)")]
    NoTempo,
    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("corrupt feature store: {0}")]
    CorruptStore(String),
    #[error("cannot stratify: {0}")]
    Stratification(String),
    #[error("track too short: {seconds:.3} s (need at least {needed:.3} s)")]
    TooShort { seconds: f64, needed: f64 },
    #[error(transparent)]
    Nn(#[from] polymix_nn::NnError),
    #[error("io error on {path:?}")]
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
}

pub type Result<T> = std::result::Result<T, Error>;
