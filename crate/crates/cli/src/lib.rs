//! Command-line workbench around `singait-core`: training runs, checkpoint
//! evaluation, reward-floor calibration, per-substep state dumps, and SVG
//! charts. The binary is `singait`; every subcommand shares the flat
//! `section.key = value` configuration format implemented in [`config`].

pub mod calibrate;
pub mod config;
pub mod csv;
pub mod eval;
pub mod plot;
pub mod replay;
pub mod train;

use thiserror::Error;

pub use config::{ConfigError, RunConfig};

/// Exit code for a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit code for bad inputs: flags, config files, checkpoints, CSVs.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while doing the work (sim blowups, IO mid-run).
pub const EXIT_RUNTIME: i32 = 3;

/// Top-level command failure, split by whose fault it is. Anything wrong
/// with what the user handed us is `Config`; anything that broke after the
/// inputs checked out is `Runtime`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Shorthand for a runtime failure with a formatted message.
    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Shorthand for an input problem that is not tied to a config file.
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(ConfigError::Invalid(msg.into()))
    }
}

/// Wrap an IO error that happened while writing an artifact.
pub fn io_runtime(what: &str, path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{what} {}: {err}", path.display()))
}
