use std::fmt;

use advreg::Error;

pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const CONTRACT: u8 = 4;
pub const TOLERANCE: u8 = 5;

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: IO,
            message: message.into(),
        }
    }

    pub fn tolerance(message: impl Into<String>) -> Self {
        Self {
            code: TOLERANCE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Input(_) => CONFIG,
            Error::Io { .. } | Error::Corrupt { .. } | Error::Version { .. } => IO,
            Error::Contract(_) | Error::Autodiff(_) => CONTRACT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
