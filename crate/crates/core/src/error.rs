use thiserror::Error;

/// Errors surfaced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector failed validation (negative mass, wrong total).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    /// Two arguments that must share dimensions do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A scalar or structural parameter is outside its declared range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    /// A factorization or evaluation failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A runtime invariant (e.g. free-energy monotonicity) was violated.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
