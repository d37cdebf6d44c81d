use thiserror::Error;

/// Errors raised by models, solvers and the experiment driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state encoding: {0}")]
    InvalidState(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("capability not supported: {0}")]
    Capability(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
