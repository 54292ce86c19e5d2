use thiserror::Error;

/// Errors produced by the transport, gradient and learning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("numerical overflow in linear-domain scaling ({0}); retry with log-domain iterations")]
    NumericalOverflow(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("instance too large for the exact oracle: n*m = {size} exceeds {limit}")]
    OutOfScale { size: usize, limit: usize },

    #[error("line search stalled after {iterations} iterations at objective {objective:.6e}")]
    Stall { iterations: usize, objective: f64 },

    #[error("barycenter iterations did not settle after {iterations} iterations (last change {change:.3e})")]
    BarycenterNonConvergence { iterations: usize, change: f64, last_iterate: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OtError {
    fn from(e: std::io::Error) -> Self {
        OtError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OtError>;
