use thiserror::Error;

/// Errors raised by mesh construction, assembly and operator application.
///
/// Solver non-convergence is not an error: it is reported through
/// [`SolveReport`](crate::multigrid::SolveReport).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The problem description is inconsistent (bad mesh sizes, asymmetric
    /// measure, out-of-range fractional order, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with arguments that violate its contract
    /// (length mismatch, wrong level, oracle size cap, ...).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
