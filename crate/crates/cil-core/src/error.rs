//! Error types shared across the crate.

/// Crate-wide error type.
///
/// The variants separate caller mistakes (`Config`, `Input`, `Usage`) from
/// runtime trouble (`Numeric`, `Parse`, `Io`) so the CLI can map them onto
/// distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Model / stream / run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value handed to an operation is out of range or mis-shaped.
    #[error("input error: {0}")]
    Input(String),

    /// An operation was called in a state it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value (NaN/Inf) showed up where finite math is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed binary data; `offset` points at the offending byte.
    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }
}
