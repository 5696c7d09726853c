use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum TrapError {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation radius {radius} too small: tail bound {bound:e} exceeds {limit:e}")]
    TruncationTooSmall { radius: f64, bound: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "eigensolver did not converge after {iterations} iterations (best residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("grid spacing {h} too coarse to resolve holes; need h <= {required}")]
    GridTooCoarse { h: f64, required: f64 },

    #[error("bad data: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrapError>;

impl TrapError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        TrapError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
