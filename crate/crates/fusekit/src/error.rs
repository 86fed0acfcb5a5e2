//! Error taxonomy shared across the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensor kernels, fusion modules, file formats, and the trainer.
#[derive(Debug)]
pub enum Error {
    /// A structural hyperparameter is invalid (channel/group mismatch, even/odd
    /// constraints, divisibility).
    Config(String),
    /// Tensor extents do not satisfy an operation's shape contract.
    Shape(String),
    /// Values are invalid for the operation (e.g. negative running variance).
    Data(String),
    /// A serialized tensor or weight archive is malformed.
    Format(String),
    /// A serialized file declares an unsupported version or dtype.
    Version(String),
    /// Tape bookkeeping is inconsistent (replay mismatch, bad value id).
    Internal(String),
    /// Toy training diverged; reports the epoch where loss became non-finite.
    Training { epoch: usize },
    /// Command-line usage error.
    Usage(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Version(msg) => write!(f, "version error: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
            Error::Training { epoch } => {
                write!(f, "training error: loss became non-finite at epoch {epoch}")
            }
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
