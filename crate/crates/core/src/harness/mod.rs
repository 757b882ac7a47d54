//! Experiment runner: configuration, single runs, replicated suites,
//! comparison tables and their CSV artifacts.
//!
//! Replication `r` runs with seed `base_seed + r`; that seed keys the context,
//! reward, agent and (for the realizable family) weight streams.

mod config;
mod output;
mod run;
mod suite;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diag::DiagError;
use crate::env::EnvError;
use crate::falcon::FalconError;
use crate::linmodel::{ModelError, SolveError};

pub use config::{AgentKind, AgentParams, ConfigError, EpsilonChoice, FieldError, RunConfig};
pub use output::{
    output_dir, read_models, rerun_diagnostics, write_comparison, write_events, write_models, write_run, write_suite,
    EVENTS_HEADER,
};
pub use run::{
    build_agent, epoch_gamma, oracle_summary, resolve_epsilon, run_one, run_trace, EpochRecord, IncompleteEpoch, OracleSummary,
    RunArtifacts,
};
pub use suite::{aggregate, checkpoints, compare, run_suite, ComparisonTable, RunTotals, SuiteSummary, SUMMARY_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("config mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] FalconError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<HarnessError> },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed artifact: {0}")]
    Artifact(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// The dual search failed to bracket a feasible multiplier.
    pub fn is_non_convergence(&self) -> bool {
        match self {
            HarnessError::Agent(FalconError::Solve(SolveError::NoBracket { .. })) => true,
            HarnessError::Replication { source, .. } => source.is_non_convergence(),
            _ => false,
        }
    }

    /// Bad input from the user rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Config(_) | HarnessError::Mismatch(_) | HarnessError::Env(_) => true,
            HarnessError::Agent(FalconError::InvalidParams(_) | FalconError::InvalidConfidence { .. }) => true,
            HarnessError::Replication { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
