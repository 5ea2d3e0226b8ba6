//! Config-driven front end for the `flipdyn` solvers: load a TOML experiment,
//! run the matching solver and simulator, and write CSV/JSON results.

pub mod config;
pub mod results;
pub mod run;

use std::path::PathBuf;

use flipdyn::finite::SolverError;
use flipdyn::lq_scalar::LqError;
use flipdyn::lqr::LqrError;
use flipdyn::model::ModelError;
use flipdyn::simulator::SimError;
use thiserror::Error;

pub use config::{load_config, parse_config, read_config, ConfigError, ExperimentConfig, Mode};
pub use results::ResultsBundle;
pub use run::{compute, run_experiment, Command};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VALIDITY: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("lq solver: {0}")]
    Lq(#[from] LqError),
    #[error("lqr synthesis: {0}")]
    Lqr(#[from] LqrError),
    #[error("finite solver: {0}")]
    Solver(#[from] SolverError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 2 for config and usage problems, 3 for validity violations, 4 for
    /// I/O failures, 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Lq(LqError::ValidityViolation { .. } | LqError::InvalidStep { .. })
            | CliError::Sim(SimError::Policy { .. }) => EXIT_VALIDITY,
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_OTHER,
        }
    }
}
