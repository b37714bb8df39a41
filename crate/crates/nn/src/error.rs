use thiserror::Error;

#[derive(Error, Debug)]
pub enum NnError {
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite value produced by layer {index} ({name})")]
    NonFinite { index: usize, name: String },
    #[error("backward called without a cached train-mode forward pass")]
    MissingCache,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("io error")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
