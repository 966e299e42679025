use thiserror::Error;

/// Failure classes shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: grid mismatch, out-of-range parameter, malformed region.
    #[error("validation: {0}")]
    Validation(String),
    /// A solver failed to converge or produced non-finite values.
    #[error("numerical: {0}")]
    Numerical(String),
    /// A run completed but missed an asserted tolerance.
    #[error("tolerance: {0}")]
    Tolerance(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
