use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad distribution, out-of-range parameter, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Structural problem in an input (unknown node id, ungrouped column, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A value left its mathematical domain (negative probability, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical failure (divergence, NaN/Inf in iterate).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// GAMP produced a non-finite state; the last finite state is attached.
    #[error("GAMP diverged at iteration {iteration} (NaN/Inf in state)")]
    GampDivergence { iteration: usize, state: Box<crate::gamp::GampState> },

    /// Matrix construction could not be completed.
    #[error("design construction failed: {reason} (differences placed so far: {placed:?})")]
    Construction { reason: String, placed: Vec<usize> },

    /// Input matrix failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}
