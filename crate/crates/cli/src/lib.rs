//! Command-line driver: loads a run configuration, dispatches to the solver
//! and writes results (JSON), fields and traces (CSV) and run metadata.

pub mod config;
pub mod fieldio;
pub mod run;

use std::path::Path;

pub use config::RunConfig;
pub use run::{run, Outcome};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const CONVERGENCE: u8 = 2;
    pub const SUITE_FAILURE: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("field file error: {0}")]
    Field(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] plap::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        use plap::Error as E;
        match self {
            CliError::Config(_) | CliError::Field(_) | CliError::Io(_) => exit::VALIDATION,
            CliError::Solver(e) => match e {
                E::InvalidGrid(_)
                | E::InvalidProblem(_)
                | E::LengthMismatch { .. }
                | E::NonFinite { .. }
                | E::Expr(_)
                | E::InvalidSampling(_) => exit::VALIDATION,
                _ => exit::CONVERGENCE,
            },
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Field(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
