//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Residual norm after each iteration.
        history: Vec<f64>,
    },

    #[error("fixed-point iteration exceeded {max_sweeps} sweeps at step {step} (last residual {residual:.3e})")]
    MaxSweepsExceeded {
        step: usize,
        max_sweeps: usize,
        residual: f64,
        /// Field residual after each sweep.
        trace: Vec<f64>,
    },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn mesh(msg: impl Into<String>) -> Self {
        Error::Mesh(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
