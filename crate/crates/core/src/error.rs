use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size out of range: {0}")]
    Size(String),
    #[error("tuple ordering: {0}")]
    Ordering(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: {0}")]
    Definiteness(String),
    #[error("matrix is not self-adjoint: {0}")]
    SelfAdjoint(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input at {path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("builder failure at cube {cube}: {msg}")]
    Builder { cube: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
