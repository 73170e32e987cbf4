use alloc::string::String;
use core::fmt;

/// Errors produced by fitting, prediction and metric computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data.
    InvalidInput(String),
    /// An argument outside its admissible range.
    InvalidParameter(String),
    /// The data does not allow the requested fit (e.g. one class only).
    Degenerate(String),
    /// A numerical routine failed (e.g. Cholesky of a non-PD matrix).
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate data: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
