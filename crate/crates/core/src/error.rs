use thiserror::Error;

/// Errors produced by the quantization engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid bit width, threshold, scheme combination or other setting.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),
    /// API misuse, e.g. a backward cache that does not match its upstream gradient.
    #[error("usage error: {0}")]
    Usage(String),
    /// Fixed-point accumulator overflow or similar integer failure.
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
