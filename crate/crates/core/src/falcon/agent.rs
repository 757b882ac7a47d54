use rand::Rng;

use crate::env::Context;
use crate::linmodel::{
    constrained_fit, fit_ols, normalized_sse, ConstraintSpec, DataBatch, DualReport, DualSearch, LinearModel,
    Observation,
};
use crate::rng::SimRng;

use super::kernel::action_kernel;
use super::schedule::{gamma_for_epoch, slack_for_epoch, EpochSchedule, RateParams};
use super::FalconError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Active,
    Passive,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Active => "active",
            Phase::Passive => "passive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub arm: usize,
    pub phase: Phase,
}

/// A bandit policy driven round by round. Rounds are numbered from 1.
pub trait Agent: Send {
    fn name(&self) -> &str;

    /// Current epoch (or update batch) index, starting at 1.
    fn epoch(&self) -> usize;

    fn act(&mut self, t: u64, x: &Context, rng: &mut SimRng) -> Result<Decision, FalconError>;

    /// Records the observed reward; returns an event when this round closed an epoch.
    fn record(&mut self, t: u64, x: &Context, decision: Decision, reward: f64) -> Result<Option<EpochEvent>, FalconError>;
}

/// What happened at the end of one completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEvent {
    pub m: usize,
    /// `τ_{m−1}`; the epoch covers rounds `τ_{m−1}+1 ..= τ_m`.
    pub tau_start: u64,
    pub tau_end: u64,
    /// `γ_m`, used throughout epoch `m`.
    pub gamma: f64,
    /// The model `f̂_m` in force during the epoch.
    pub model_used: LinearModel,
    /// `f̂_{m+1}`.
    pub next_model: LinearModel,
    pub active_rows: usize,
    pub passive_rows: usize,
    pub update: ModelUpdate,
}

/// Outcome of the end-of-epoch regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    pub model: LinearModel,
    /// Absent when the passive batch was empty and the plain ERM was used.
    pub constraint: Option<ConstraintOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintOutcome {
    pub alpha: f64,
    pub slack: f64,
    pub report: DualReport,
    /// `normalized_sse(f̂_{m+1}, S′_m) − α_m`; at most `slack` up to tolerance.
    pub passive_excess: f64,
}

impl ModelUpdate {
    /// True when the update fell back to the unconstrained ERM.
    pub fn is_fallback(&self) -> bool {
        self.constraint.is_none()
    }
}

/// The end-of-epoch model update.
///
/// With passive data, minimises the active-batch error subject to the passive
/// budget `α_m + slack_m`; without it, returns the unconstrained ERM on the
/// active batch.
pub fn constrained_update(
    m: usize,
    active: &DataBatch,
    passive: &DataBatch,
    rates: &RateParams,
    search: &DualSearch,
) -> Result<ModelUpdate, FalconError> {
    if passive.is_empty() {
        return Ok(ModelUpdate { model: fit_ols(active).model, constraint: None });
    }
    let slack = slack_for_epoch(m, passive.len(), rates);
    let cons = ConstraintSpec::new(passive, slack)?;
    let (model, report) = constrained_fit(active, &cons, search)?;
    let passive_excess = normalized_sse(&model, passive) - cons.alpha();
    Ok(ModelUpdate {
        model,
        constraint: Some(ConstraintOutcome { alpha: cons.alpha(), slack, report, passive_excess }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalconConfig {
    /// Passive fraction of each epoch, in `[0, 0.5)`.
    pub epsilon: f64,
    pub tau1: u64,
    pub rates: RateParams,
    pub search: DualSearch,
}

/// Mutable state of the agent within one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub epoch: usize,
    pub model: LinearModel,
    pub gamma: f64,
    pub active: DataBatch,
    pub passive: DataBatch,
    pub schedule: EpochSchedule,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct EpsilonFalcon {
    name: &'static str,
    state: AgentState,
    rates: RateParams,
    search: DualSearch,
}

impl EpsilonFalcon {
    pub fn new(config: FalconConfig, num_arms: usize, context_dim: usize) -> Result<Self, FalconError> {
        if !(0.0..0.5).contains(&config.epsilon) {
            return Err(FalconError::InvalidParams(format!("epsilon must lie in [0, 0.5), got {}", config.epsilon)));
        }
        config.rates.validate()?;
        let state = AgentState {
            epoch: 1,
            model: LinearModel::zeros(num_arms, context_dim),
            gamma: 1.0,
            active: DataBatch::new(num_arms, context_dim),
            passive: DataBatch::new(num_arms, context_dim),
            schedule: EpochSchedule::new(config.tau1)?,
            epsilon: config.epsilon,
        };
        Ok(Self { name: "epsilon_falcon", state, rates: config.rates, search: config.search })
    }

    /// FALCON: no passive phase, unconstrained ERM updates.
    pub fn plain(config: FalconConfig, num_arms: usize, context_dim: usize) -> Result<Self, FalconError> {
        let mut agent = Self::new(FalconConfig { epsilon: 0.0, ..config }, num_arms, context_dim)?;
        agent.name = "falcon";
        Ok(agent)
    }

    /// Resumes from an explicit state, e.g. a mid-run snapshot.
    pub fn from_state(state: AgentState, rates: RateParams, search: DualSearch) -> Self {
        Self { name: "epsilon_falcon", state, rates, search }
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn rates(&self) -> &RateParams {
        &self.rates
    }

    fn phase_of(&self, t: u64) -> Result<Phase, FalconError> {
        let s = &self.state;
        let (start, end) = (s.schedule.tau(s.epoch - 1), s.schedule.tau(s.epoch));
        if t <= start || t > end {
            return Err(FalconError::Sequencing { t, epoch: s.epoch, start: start + 1, end });
        }
        Ok(if t <= s.schedule.last_active(s.epoch, s.epsilon) { Phase::Active } else { Phase::Passive })
    }

    /// Refits the model at `τ_m` and moves to epoch `m + 1`.
    pub fn end_of_epoch_update(&mut self) -> Result<EpochEvent, FalconError> {
        let s = &self.state;
        let m = s.epoch;
        let num_arms = s.model.num_arms();
        let update = constrained_update(m, &s.active, &s.passive, &self.rates, &self.search)?;
        let next_gamma = gamma_for_epoch(m + 1, &s.schedule, &self.rates, num_arms)?;
        let event = EpochEvent {
            m,
            tau_start: s.schedule.tau(m - 1),
            tau_end: s.schedule.tau(m),
            gamma: s.gamma,
            model_used: s.model.clone(),
            next_model: update.model.clone(),
            active_rows: s.active.len(),
            passive_rows: s.passive.len(),
            update,
        };
        let s = &mut self.state;
        s.model = event.next_model.clone();
        s.gamma = next_gamma;
        s.epoch = m + 1;
        s.active.clear();
        s.passive.clear();
        Ok(event)
    }
}

impl Agent for EpsilonFalcon {
    fn name(&self) -> &str {
        self.name
    }

    fn epoch(&self) -> usize {
        self.state.epoch
    }

    fn act(&mut self, t: u64, x: &Context, rng: &mut SimRng) -> Result<Decision, FalconError> {
        let phase = self.phase_of(t)?;
        let arm = match phase {
            Phase::Active => action_kernel(&self.state.model.predictions(x), self.state.gamma).sample(rng),
            Phase::Passive => rng.gen_range(0..self.state.model.num_arms()),
        };
        Ok(Decision { arm, phase })
    }

    fn record(&mut self, t: u64, x: &Context, decision: Decision, reward: f64) -> Result<Option<EpochEvent>, FalconError> {
        let phase = self.phase_of(t)?;
        let row = Observation { context: x.clone(), arm: decision.arm, reward };
        match phase {
            Phase::Active => self.state.active.push(row)?,
            Phase::Passive => self.state.passive.push(row)?,
        }
        if t == self.state.schedule.tau(self.state.epoch) {
            return self.end_of_epoch_update().map(Some);
        }
        Ok(None)
    }
}
