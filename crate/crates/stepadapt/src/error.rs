//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates a documented bound.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The config file could not be parsed at all.
    #[error("parse error: {0}")]
    Parse(String),

    /// The requested probability query is not available for this noise family.
    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    /// Too few data points for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A set operation received an empty set.
    #[error("empty set")]
    EmptySet,

    /// The iteration produced a non-finite state variable.
    #[error("non-finite state at step {t}")]
    NonFiniteState { t: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
