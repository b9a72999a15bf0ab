//! Error type shared by every module of the crate.

/// Crate-wide error enum.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point or matrix had the wrong dimension for the model or region.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The information matrix X'X is singular (or numerically so).
    #[error("singular information matrix")]
    SingularInformation,

    /// A search could not produce any design with a defined criterion value.
    #[error("infeasible search: {0}")]
    Infeasible(String),

    /// An interval-scaled quantity was requested for a design with no pure
    /// error degrees of freedom.
    #[error("no pure-error degrees of freedom: {0}")]
    NoPureError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV or configuration input.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
