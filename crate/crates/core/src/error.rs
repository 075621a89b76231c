use alloc::string::String;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Hurst parameter must lie in the open interval (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure in {what}: achieved error {achieved:e}")]
    Numerical { what: String, achieved: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e}): {reason}")]
    Convergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },
    #[error("missing capability: {0}")]
    Capability(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("consistency error: {0}")]
    Consistency(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
