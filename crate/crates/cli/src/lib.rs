//! Configuration loading, command dispatch and machine-readable output for
//! the `reachsec` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{dispatch, Command, Output};
pub use config::{load_config, RunConfig};
pub use output::ResultEnvelope;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "REACHSEC_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad arguments, configuration or model input.
    Usage(String),
    /// The numerics failed: instability, non-convergence, infeasibility.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<reachsec::Error> for CliError {
    fn from(e: reachsec::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}
