use thiserror::Error;

/// Crate-wide error type. The CLI maps these onto process exit codes:
/// `Invalid` -> 2, `Budget` -> 3, everything else -> 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad shapes, non-stochastic rows, parse failures.
    /// Rows are never renormalized silently; a violation is a construction error.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A combinatorial or iteration budget was exceeded (vertex cap, grid cap,
    /// max_iter). Signals that a structured/constructive path should be used
    /// or the budget raised, not that the answer is wrong.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// Numerical failure that should not happen on well-posed inputs
    /// (singular system with gamma < 1, simplex breakdown, ambiguous game).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
