//! Command failures and their process exit codes.

use std::fmt;

use imlp_core::Error;

/// Process exit codes.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const STATS: u8 = 5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: exit::CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: exit::DATA,
            message: message.into(),
        }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn code_for(err: &Error) -> u8 {
    match err.root() {
        Error::Divergence { .. } => exit::NUMERICAL,
        Error::InsufficientAlgorithms { .. } | Error::MissingCell { .. } | Error::Range(_) => exit::STATS,
        Error::InvalidArgument(_) => exit::CONFIG,
        _ => exit::DATA,
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        Self {
            code: code_for(&err),
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_error(path: &std::path::Path, err: impl fmt::Display) -> CliError {
    CliError::data(format!("{}: {err}", path.display()))
}
