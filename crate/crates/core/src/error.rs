use thiserror::Error;

/// Failure of an adaptive integration to reach its tolerance.
///
/// `log_partial` is the log of the best estimate at the point of giving up and
/// `log_bound` the log of the remaining error estimate, so callers can still
/// emit a bracket `[partial - bound, partial + bound]`.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error(
    "quadrature did not converge: log estimate {log_partial:.6}, log error bound {log_bound:.6}, {evals} evaluations"
)]
pub struct QuadratureError {
    pub log_partial: f64,
    pub log_bound: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("exponential moment diverges at gamma = {gamma}: distribution is not in M(gamma)")]
    DivergentMoment { gamma: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
