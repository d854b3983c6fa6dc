use thiserror::Error;

/// Errors produced by graph ingestion, validation, and the statistical
/// routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A line of edge-list input could not be parsed.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Validation(String),

    /// A paired test was requested on data with zero variance.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
