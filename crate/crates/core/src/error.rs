//! Error type shared across the workspace.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes do not conform.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument value is outside its documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An API was called in a way its contract forbids (wrong stage,
    /// non-scalar loss, missing prerequisite, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A NaN or infinity appeared in a forward pass, backward pass, or loss.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file failed to parse (IDX header, checkpoint, manifest, verdicts).
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
