//! The Epsilon-FALCON agent and the baselines it is compared against.

mod agent;
mod baselines;
mod kernel;
mod schedule;

use thiserror::Error;

use crate::linmodel::{ModelError, SolveError};

pub use agent::{
    constrained_update, Agent, AgentState, ConstraintOutcome, Decision, EpochEvent, EpsilonFalcon, FalconConfig,
    ModelUpdate, Phase,
};
pub use baselines::{LinUcb, LinUcbConfig, OracleAgent, UniformRandom};
pub use kernel::{action_kernel, ActionKernel};
pub use schedule::{gamma_for_epoch, slack_for_epoch, tune_epsilon, EpochSchedule, RateParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FalconError {
    #[error("invalid agent parameters: {0}")]
    InvalidParams(String),
    #[error("ln((m-1)/delta) must be positive at epoch {m}, delta = {delta}")]
    InvalidConfidence { m: usize, delta: f64 },
    #[error("round {t} is outside epoch {epoch} (rounds {start}..={end})")]
    Sequencing { t: u64, epoch: usize, start: u64, end: u64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
