//! Shared error type for the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid static configuration (dimensions, knot counts, schedules).
    #[error("configuration error: {0}")]
    Config(String),

    /// An evaluation point lies outside the basis domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched array dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// A parameter violates a model constraint (simplex, positivity, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical linear-algebra operation failed (after any retry policy).
    #[error("linear algebra error: {0}")]
    LinAlg(String),

    /// Malformed input data; `row` is the 1-based line number in the file.
    #[error("ingestion error at line {row}: {msg}")]
    Ingestion { row: usize, msg: String },

    /// Malformed or inconsistent archive/manifest contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
