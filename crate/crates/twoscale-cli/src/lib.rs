//! Command line front end for the `twoscale` toolkit.
//!
//! Every command writes its tables as CSV and a JSON manifest recording the
//! resolved configuration and the SHA-256 digest of each output, so that
//! `twoscale rerun <manifest>` reproduces the files byte for byte.

pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;

use twoscale::ErrorClass;

/// Failures of a command, mapped to process exit codes by [`CliError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] twoscale::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 1 failed checks, 2 configuration, 3 domain error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Model(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Domain => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Verification(_) => "verification",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Model(e) => match e.class() {
                ErrorClass::Config => "config",
                ErrorClass::Domain => "domain",
                ErrorClass::Numerical => "numerical",
            },
        }
    }

    /// Single-line JSON record for standard error.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
