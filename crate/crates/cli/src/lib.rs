//! Library side of the `carpetq` binary: configuration loading and the
//! subcommands, each of which writes its tables into an output directory
//! and returns the list of failed checks.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub use commands::{run_command, Command, Context};
pub use config::{load_config, parse_config, ConfigError, Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] carpetq_core::CarpetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("nothing to report: no tables from earlier runs in {0}")]
    NothingToReport(PathBuf),
    #[error("malformed table {path}: {message}")]
    Table { path: PathBuf, message: String },
}

impl CliError {
    /// 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::NothingToReport(_) | CliError::Table { .. } => 2,
            _ => 3,
        }
    }
}

/// A failed check, reported in `failures.json` and on stderr.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Failure {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<Failure>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub(crate) fn check(
        &mut self,
        command: &'static str,
        k: Option<usize>,
        check: &str,
        passed: bool,
        detail: impl FnOnce() -> String,
    ) -> bool {
        if !passed {
            self.failures.push(Failure {
                command,
                k,
                check: check.into(),
                detail: detail(),
            });
        }
        passed
    }
}
