//! Experiment harness around `adhmc-core`: configuration parsing, the target
//! registry surface, the replication driver with CSV output, logistic
//! regression data ingestion, and the 1D transfer-operator lab.

pub mod blr;
pub mod config;
pub mod experiment;
pub mod oplab;
pub mod spec;

/// Process exit codes: 0 success, 2 configuration error, 3 runtime error.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unknown keys/targets, malformed specs.
    Config(String),
    /// IO or numerical failure at run time.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
