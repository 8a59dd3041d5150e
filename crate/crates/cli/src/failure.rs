use std::fmt;

use toa_core::Error;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_IO: u8 = 5;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure::new(EXIT_CONFIG, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Io { .. } => EXIT_IO,
            Error::Parse { .. } | Error::InvariantViolation(_) => EXIT_PARSE,
            Error::InvalidInput(_) | Error::SourceOnSensor { .. } => EXIT_CONFIG,
            Error::Solve(toa_core::SolveError::UnsupportedLayout(_)) => EXIT_CONFIG,
            Error::Solve(_) | Error::DegenerateFit => EXIT_NUMERICAL,
        };
        Failure::new(code, err.to_string())
    }
}
