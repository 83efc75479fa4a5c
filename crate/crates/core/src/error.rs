use thiserror::Error;

/// Errors raised by models, solvers and samplers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("point lies on or outside the parameter domain: {0}")]
    DomainBoundary(String),
    #[error("non-finite log-likelihood term at row {row}")]
    Evaluation { row: usize },
    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Nonconvergence { iterations: usize, grad_norm: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("matrix is numerically singular: {0}")]
    Singular(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
