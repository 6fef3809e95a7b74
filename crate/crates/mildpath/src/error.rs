use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MildError {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("arity error: order {order} needs {order} directions, got {got}")]
    Arity { order: usize, got: usize },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("covariance regularization failed: {0}")]
    Regularization(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("path is sample-only and needs piecewise-linear interpolation")]
    NeedsInterpolation,
    #[error("invalid area: {0}")]
    InvalidArea(String),
    #[error("inconsistent path/area pair: Chen residual {0:e}")]
    InconsistentPair(f64),
    #[error("no local solution at this resolution: {0}")]
    NoLocalSolution(String),
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MildError>;

impl From<std::io::Error> for MildError {
    fn from(e: std::io::Error) -> Self {
        MildError::Io(e.to_string())
    }
}

impl From<csv::Error> for MildError {
    fn from(e: csv::Error) -> Self {
        MildError::Io(e.to_string())
    }
}
