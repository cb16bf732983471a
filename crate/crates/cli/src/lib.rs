//! Library side of the command-line front end: scenario configuration,
//! trace (CSV) emission and parsing, and run summaries. The `nmpc` binary
//! is a thin argument-parsing layer over this.

pub mod config;
pub mod report;
pub mod trace;

use std::fmt;

/// CLI-level error carrying the process exit code (always 1; exit code 2
/// is reserved for completed runs that raised warnings).
#[derive(Debug)]
pub struct CliError {
    message: String,
    pub code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(format!("i/o error: {e}"))
    }
}
