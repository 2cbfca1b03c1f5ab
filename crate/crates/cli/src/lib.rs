//! Experiment driver: TOML specs in, plot-ready CSV and JSON summaries out.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

pub use commands::{cmd_compare, cmd_gamma, cmd_partition, cmd_run};
pub use config::{parse_config, parse_config_str, ExperimentSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("comparison error: {0}")]
    Compare(String),
    #[error(transparent)]
    Core(#[from] fedcomm_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 1 for anything the user can fix in the spec, 2 for failures while
    /// running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Compare(_) => 1,
            CliError::Core(e) if e.is_configuration() => 1,
            _ => 2,
        }
    }
}
