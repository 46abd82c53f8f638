use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("selected measurement branch has zero norm")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, QsimError>;
