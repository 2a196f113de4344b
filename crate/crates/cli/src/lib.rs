//! File formats and run harness around the core training library: JSON run
//! configuration, the dataset CSV format, the binary model file, and the
//! JSON/CSV artifacts a run leaves behind.

pub mod config;
pub mod dataset_csv;
pub mod model_file;
pub mod report;

use std::fmt;

/// Harness-level failure, split by exit code: configuration problems exit
/// with 2, runtime and I/O problems with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ddian_core::Error> for CliError {
    fn from(err: ddian_core::Error) -> Self {
        use ddian_core::Error::*;
        match err {
            Config(_) | Parameter(_) | Protocol(_) | Data { .. } => {
                CliError::Config(err.to_string())
            }
            Dimension { .. } | Contract(_) => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}
