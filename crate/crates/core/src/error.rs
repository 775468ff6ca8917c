use alloc::string::String;
use core::fmt;

/// Errors raised by estimation and validation routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A record or container violates a structural invariant. `row` is the
    /// zero-based record index when one applies.
    Validation { row: Option<usize>, message: String },
    /// A tuning or model parameter is outside its admissible range.
    Parameter(String),
    /// Inputs are mutually inconsistent (grids, dimensions, missing models).
    Configuration(String),
    /// The data do not support the requested estimate.
    Estimation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation { row: None, message: message.into() }
    }

    pub(crate) fn at_row(row: usize, message: impl Into<String>) -> Self {
        Error::Validation { row: Some(row), message: message.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation { row: Some(row), message } => {
                write!(f, "validation error at row {row}: {message}")
            }
            Error::Validation { row: None, message } => write!(f, "validation error: {message}"),
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::Configuration(m) => write!(f, "configuration error: {m}"),
            Error::Estimation(m) => write!(f, "estimation error: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
