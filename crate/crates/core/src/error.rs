use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("stream error: {0}")]
    Stream(String),
    #[error("oracle refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn instance<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Instance(msg.into()))
}
