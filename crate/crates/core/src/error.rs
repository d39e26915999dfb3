//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by lattice operations, solvers, verifiers and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a named parameter constraint.
    #[error("config constraint `{constraint}` violated: {detail}")]
    Config { constraint: String, detail: String },

    /// An operation was called outside its precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Two inputs that must share a grid or lattice do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A time stepper or fixed-point search produced non-finite or unreachable values.
    #[error("numeric abort at step {step}: {detail}")]
    Numeric { step: usize, detail: String },

    /// An iterative construction failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A binary record or manifest could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(constraint: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            constraint: constraint.into(),
            detail: detail.into(),
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numeric(step: usize, detail: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
