//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, unknown ids, out-of-range
    /// hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced a non-finite value; the offending update was
    /// rejected.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A sample was requested from a buffer holding fewer transitions than
    /// the batch size.
    #[error("insufficient data: buffer holds {have} transitions, need {need}")]
    InsufficientData { have: usize, need: usize },

    /// The environment returned a malformed or non-finite state.
    #[error("environment fault: {0}")]
    Env(String),

    /// A statistic was requested from too small a sample.
    #[error("undefined interval: need at least 2 samples, got {0}")]
    UndefinedInterval(usize),

    /// A performance table is missing entries required for the regret.
    #[error("incomplete performance table; missing: {}", .0.join(", "))]
    IncompleteTable(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn env(msg: impl Into<String>) -> Self {
        Error::Env(msg.into())
    }
}
