//! Experiment runner for the SecureCyclon simulator: scenario files,
//! sweeps, figure presets and seed-aggregated reports.

pub mod presets;
pub mod report;
pub mod runner;
pub mod scenario;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use report::{cmd_report, Report, Target};
pub use runner::{execute, Manifest, Source};
pub use scenario::{GridPoint, ScenarioFile, SeedRange, Sweep};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] securecyclon::ConfigError),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} acceptance target(s) failed")]
    Acceptance(usize),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Scenario(_) => 2,
            CliError::Acceptance(_) => 3,
            CliError::MissingData(_) | CliError::Io { .. } => 1,
        }
    }
}
