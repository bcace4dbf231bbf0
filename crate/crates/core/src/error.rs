use core::fmt;

/// Errors surfaced by the identification pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An input value was NaN or infinite.
    NonFinite(&'static str),
    /// A matrix that must be positive definite failed to factorize,
    /// even after jitter.
    Conditioning(&'static str),
    /// A configuration value violates its contract.
    InvalidConfig(&'static str),
    /// Paired sequences have different lengths.
    LengthMismatch { expected: usize, got: usize },
    /// An operation requires non-empty input.
    Empty(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Conditioning(what) => {
                write!(f, "conditioning failure: {what} is not positive definite")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            Error::Empty(what) => write!(f, "{what} must be non-empty"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
