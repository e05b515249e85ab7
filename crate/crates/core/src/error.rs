use thiserror::Error;

/// Errors raised by the toolkit. The variant determines how the CLI maps a
/// failure onto an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad input shape or out-of-range parameter.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A model evaluator produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An iterative solver failed to converge or a factorization broke down.
    #[error("solver error: {0}")]
    Solver(String),

    /// An iteration ran out of budget; `partial` holds the eigenvalues that
    /// had already deflated.
    #[error("no convergence: {message} ({} eigenvalues deflated before failure)", partial.len())]
    NoConvergence { message: String, partial: Vec<num_complex::Complex64> },

    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
