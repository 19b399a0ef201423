//! Command-line driver: metric loading, subcommands and report emission.

pub mod commands;
pub mod config;
pub mod metric_spec;
pub mod output;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] finsler_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for bad input or domain errors, 3 for numerical nonconvergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_nonconvergence() => 3,
            CliError::Io(_) => 2,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    VerificationFailed,
    Nonconvergence,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::VerificationFailed => 1,
            Outcome::Nonconvergence => 3,
        }
    }
}
