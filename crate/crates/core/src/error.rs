//! Error type shared across the crate.

use std::fmt;

/// Errors produced by kernels, models, drivers and I/O.
#[derive(Debug)]
pub enum CoreError {
    /// Tensor/shape contract violated (channel chains, lengths, positions).
    Shape(String),
    /// Numeric domain violated (zero norms, invalid fractions, degenerate
    /// eigenvalues, divergent training).
    Domain(String),
    /// Configuration rejected before any work was done.
    Config(String),
    /// File format violations; the message carries the byte offset where known.
    Format(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape(msg) => write!(f, "shape error: {msg}"),
            CoreError::Domain(msg) => write!(f, "domain error: {msg}"),
            CoreError::Config(msg) => write!(f, "config error: {msg}"),
            CoreError::Format(msg) => write!(f, "format error: {msg}"),
            CoreError::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for CoreError {
    fn from(err: std::io::Error) -> Self {
        CoreError::Io(err)
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Shape(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Domain(msg.into()))
}
