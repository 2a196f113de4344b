//! Error type shared by every module of the crate.

use alloc::string::String;
use core::fmt;

/// All failure modes of the library, grouped by contract kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes incompatible for an operation; names both shapes.
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A scalar argument is outside its allowed range.
    Parameter(String),
    /// An internal API contract was violated (e.g. backward on a non-scalar).
    Contract(String),
    /// A sample-level problem, locating the offending row.
    Data { row: usize, message: String },
    /// Invalid configuration (degenerate dimensions, bad spec fields).
    Config(String),
    /// Evaluation-protocol violation (unknown target domain, missing class).
    Protocol(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, lhs, rhs } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Data { row, message } => write!(f, "bad data at row {row}: {message}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Protocol(msg) => write!(f, "protocol violation: {msg}"),
        }
    }
}
