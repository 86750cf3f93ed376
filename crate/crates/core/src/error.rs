use thiserror::Error;

/// Errors produced by grid construction, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum DkwError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("solution blew up (non-finite values) at step {step}, t = {t}")]
    Blowup { step: usize, t: f64 },
    #[error("elliptic solve failed to converge after {iters} iterations (relative residual {residual:.3e}, min weight {min_weight:.3e})")]
    SolveFailed {
        iters: usize,
        residual: f64,
        min_weight: f64,
    },
    #[error("snapshot io: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DkwError>;

pub(crate) fn param_err(name: &str, reason: impl Into<String>) -> DkwError {
    DkwError::InvalidParam {
        name: name.to_string(),
        reason: reason.into(),
    }
}
