use std::process::ExitCode;

use costeff_core::data::DataError;
use costeff_core::econ::EconError;
use costeff_core::{FitError, ModelError};
use thiserror::Error;

/// Exit status for bad input: data, grid, spec, manifest or flags.
pub const EXIT_INPUT: u8 = 2;
/// Exit status when every artifact was written but some chain did not converge.
pub const EXIT_CONVERGENCE: u8 = 3;
/// Exit status for failures while writing outputs or inside the sampler.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: FitError,
    },
    #[error("R-hat above {threshold} in {}", .runs.join(", "))]
    Convergence { threshold: f64, runs: Vec<String> },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => EXIT_INPUT,
            // anything the data or spec could have caught is an input error
            CliError::Fit { source, .. } => match source {
                FitError::Init { .. } => EXIT_RUNTIME,
                _ => EXIT_INPUT,
            },
            CliError::Convergence { .. } => EXIT_CONVERGENCE,
            CliError::Output(_) => EXIT_RUNTIME,
        })
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EconError> for CliError {
    fn from(e: EconError) -> Self {
        match e {
            EconError::Io(m) => CliError::Output(m),
            other => CliError::Input(other.to_string()),
        }
    }
}
