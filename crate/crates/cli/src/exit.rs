//! One error type for the whole binary, mapped onto distinct exit codes.

use dmap_core::analysis::AnalysisError;
use dmap_core::config::ConfigError;
use dmap_core::distill::DistillError;
use dmap_core::envs::{testset::TestSetError, EnvError};
use dmap_core::eval::EvalError;
use dmap_core::io::CheckpointError;
use dmap_core::policies::PolicyError;
use dmap_core::sac::SacError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Env(#[from] EnvError),
    #[error("{0}")]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Sac(#[from] SacError),
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    TestSet(#[from] TestSetError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Distill(#[from] DistillError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> CliError {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// 3 = configuration, 4 = missing file / io, 5 = simulation divergence,
/// 6 = malformed artifact (checkpoint / test set / dataset), 1 = other.
pub fn code_for(e: &CliError) -> i32 {
    match e {
        CliError::Config(_) => 3,
        CliError::Io { .. } => 4,
        CliError::Env(EnvError::SimulationDiverged { .. }) => 5,
        CliError::Sac(SacError::Env(EnvError::SimulationDiverged { .. })) => 5,
        CliError::Eval(EvalError::Rollout(SacError::Env(EnvError::SimulationDiverged { .. }))) => 5,
        CliError::Checkpoint(CheckpointError::Io(_)) => 4,
        CliError::Checkpoint(_) => 6,
        CliError::TestSet(_) => 6,
        CliError::Distill(DistillError::Io(_)) => 4,
        CliError::Distill(DistillError::Dataset(_)) => 6,
        CliError::Env(_) | CliError::Policy(_) => 3,
        CliError::Sac(SacError::Config(_)) => 3,
        _ => 1,
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
