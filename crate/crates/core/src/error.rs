use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("resource cap exceeded: {what} needs about {estimate} but the cap is {cap}")]
    Resource {
        what: String,
        estimate: u64,
        cap: u64,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
