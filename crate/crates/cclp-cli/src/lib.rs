//! Command implementations behind the `cclp` binary.
//!
//! Every command resolves its configuration, runs deterministically from
//! the given seed, and writes its outputs plus a manifest into `--out`.
//! Metric and trajectory files are byte-identical across re-runs with
//! the same configuration; the manifest additionally records wall-clock
//! timings, which of course are not.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod output;

use std::fmt;

/// Process exit codes: 0 success, 1 failed gradient check, 2 usage
/// error (also used by argument parsing), 3 data/parse error, 4
/// numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {}", msg),
            CliError::Data(msg) => write!(f, "data error: {}", msg),
            CliError::Numeric(msg) => write!(f, "numerical failure: {}", msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cclp::NumError> for CliError {
    fn from(e: cclp::NumError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<cclp::data::DataError> for CliError {
    fn from(e: cclp::data::DataError) -> Self {
        match e {
            cclp::data::DataError::Num(ne) => CliError::Numeric(ne.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {}", e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {}", e))
    }
}
