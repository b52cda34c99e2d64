use std::fmt;

use hrt_core::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIMENSION: u8 = 4;
pub const EXIT_BOUND: u8 = 5;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn flag(flag: &str, message: impl fmt::Display) -> Self {
        Self::config(format!("{flag}: {message}"))
    }

    /// Prefixes the message with the input it concerns.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::DimensionMismatch { .. } => EXIT_DIMENSION,
        Error::InvalidConfig(_) => EXIT_CONFIG,
        e if e.is_data_error() => EXIT_DATA,
        Error::LengthMismatch { .. }
        | Error::TooFewSamples { .. }
        | Error::DegenerateSystem
        | Error::AllFeaturesConstant
        | Error::FormatVersion(_)
        | Error::Json(_) => EXIT_DATA,
        _ => EXIT_OTHER,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::new(exit_code(&err), err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::new(EXIT_DATA, err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure::new(EXIT_OTHER, err.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
