//! File-based pipelines behind the `latentmpc` binary: envelope
//! identification, manifest-driven scenario runs and report generation.

use std::path::PathBuf;

use thiserror::Error;

pub mod commands;
pub mod manifest;

pub use commands::{identify, report, simulate, synth, IdentifyArgs, ReportArgs, SimulateArgs, SynthArgs};
pub use manifest::ExperimentManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),
    #[error("{failed} of {total} scenarios failed; see status.json")]
    ScenarioFailures { failed: usize, total: usize, numeric: bool },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) | CliError::ScenarioFailures { numeric: true, .. } => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
