use crate::diag::{lemma_suite, EpochSnapshot, LemmaInput, LemmaReport, RegretTrace};
use crate::env::{approximation_error_b, best_linear_fit_uniform, EnvSpec, Environment, RewardModel};
use crate::falcon::{
    gamma_for_epoch, tune_epsilon, Agent, EpochEvent, EpochSchedule, EpsilonFalcon, FalconConfig,
    LinUcb, OracleAgent, UniformRandom,
};
use crate::linmodel::{DualSearch, LinearModel};
use crate::rng::{stream, Stream};

use super::config::{AgentKind, EpsilonChoice, RunConfig};
use super::HarnessError;

/// An epoch event with the refit model's distance to `f̂*`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub event: EpochEvent,
    /// Uniform-arm mean squared distance from `f̂_{m+1}` to `f̂*`.
    pub mse_to_fhatstar: f64,
}

/// An epoch cut short by the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncompleteEpoch {
    pub m: usize,
    pub rounds_played: u64,
    pub epoch_length: u64,
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub seed: u64,
    pub agent: String,
    pub epsilon: Option<f64>,
    pub trace: RegretTrace,
    pub events: Vec<EpochRecord>,
    /// Model and `γ` in force during each epoch, including the final one.
    pub snapshots: Vec<EpochSnapshot>,
    pub incomplete_epoch: Option<IncompleteEpoch>,
    /// `Σ_t r_t(π*(x_t)) − r_t(a_t)` on realized rewards.
    pub realized_regret: f64,
    pub lemma: Option<LemmaReport>,
}

impl RunArtifacts {
    pub fn final_model(&self) -> Option<&LinearModel> {
        self.snapshots.last().map(|s| &s.model)
    }
}

/// The passive fraction an Epsilon-FALCON run will use.
pub fn resolve_epsilon(config: &RunConfig) -> Result<f64, HarnessError> {
    match (config.agent, config.params.epsilon) {
        (AgentKind::Falcon, _) => Ok(0.0),
        (_, EpsilonChoice::Fixed(e)) => Ok(e),
        (_, EpsilonChoice::Tuned) => {
            let b = approximation_error_b(&config.env, 0, &mut stream(0, Stream::Diagnostics))?
                .closed_form
                .expect("built-in environments have a closed-form b");
            Ok(tune_epsilon(b, config.env.num_arms, 1.0))
        }
    }
}

fn falcon_config(config: &RunConfig) -> Result<FalconConfig, HarnessError> {
    let num_params = config.env.num_arms * (config.env.context_dim + 1);
    Ok(FalconConfig {
        epsilon: resolve_epsilon(config)?,
        tau1: config.params.tau1,
        rates: config.params.rates(num_params),
        search: DualSearch::default(),
    })
}

pub fn build_agent(config: &RunConfig, env: &Environment) -> Result<Box<dyn Agent>, HarnessError> {
    let (k, d) = (config.env.num_arms, config.env.context_dim);
    Ok(match config.agent {
        AgentKind::EpsilonFalcon => Box::new(EpsilonFalcon::new(falcon_config(config)?, k, d)?),
        AgentKind::Falcon => Box::new(EpsilonFalcon::plain(falcon_config(config)?, k, d)?),
        AgentKind::LinUcb => Box::new(LinUcb::new(config.params.lin_ucb(), k, d)?),
        AgentKind::Uniform => Box::new(UniformRandom::new(k)),
        AgentKind::Oracle => Box::new(OracleAgent::new(env.oracle().clone())),
    })
}

/// Runs `config.horizon` rounds with every stream keyed by `seed`, then the
/// lemma suite on the recorded epoch models.
pub fn run_one(config: &RunConfig, seed: u64) -> Result<RunArtifacts, HarnessError> {
    simulate(config, seed, true)
}

/// [`run_one`] without the lemma suite; single-threaded.
pub fn run_trace(config: &RunConfig, seed: u64) -> Result<RunArtifacts, HarnessError> {
    simulate(config, seed, false)
}

pub(crate) fn simulate(config: &RunConfig, seed: u64, diagnostics: bool) -> Result<RunArtifacts, HarnessError> {
    config.validate()?;
    let spec = config.env.clone().with_seed(seed);
    let mut env = Environment::new(spec.clone())?;
    let mut agent = build_agent(config, &env)?;
    let mut agent_rng = stream(seed, Stream::Agent);
    let fhat_star = best_linear_fit_uniform(&spec)?;

    let mut trace = RegretTrace::with_capacity(config.horizon as usize);
    let mut events = Vec::new();
    let mut realized_regret = 0.0;
    let mut closed_at_end = false;
    for t in 1..=config.horizon {
        let x = env.sample_context();
        let epoch = agent.epoch();
        let decision = agent.act(t, &x, &mut agent_rng)?;
        let rewards = env.sample_reward_vector(&x);
        let best = env.optimal_action(&x);
        let truth = env.oracle();
        let e_regret = truth.mean(&x, best) - truth.mean(&x, decision.arm);
        realized_regret += rewards[best] - rewards[decision.arm];
        let event = agent.record(t, &x, decision, rewards[decision.arm])?;
        closed_at_end = event.is_some();
        if let Some(event) = event {
            let mse_to_fhatstar = event.next_model.uniform_mse(&fhat_star);
            events.push(EpochRecord { event, mse_to_fhatstar });
        }
        trace.push(t, epoch, decision.phase, x, decision.arm, rewards[decision.arm], e_regret);
    }

    let is_falcon = config.agent.is_falcon();
    let epsilon = if is_falcon { Some(resolve_epsilon(config)?) } else { None };
    let schedule = EpochSchedule::new(config.params.tau1).ok();
    let incomplete_epoch = match (is_falcon && !closed_at_end, schedule) {
        (true, Some(s)) => {
            let m = agent.epoch();
            Some(IncompleteEpoch { m, rounds_played: config.horizon - s.tau(m - 1), epoch_length: s.len(m) })
        }
        _ => None,
    };

    let snapshots = if is_falcon { falcon_snapshots(config, &events)? } else { Vec::new() };
    let lemma = if diagnostics {
        let input = LemmaInput {
            spec: &spec,
            epsilon: epsilon.unwrap_or(0.0),
            epochs: &snapshots,
            num_mc: config.mc_samples,
            seed,
        };
        Some(lemma_suite(&input)?)
    } else {
        None
    };

    Ok(RunArtifacts {
        seed,
        agent: agent.name().to_string(),
        epsilon,
        trace,
        events,
        snapshots,
        incomplete_epoch,
        realized_regret,
        lemma,
    })
}

/// Models in force during each epoch: the model used in every completed
/// epoch, then the one installed after the last completed epoch.
fn falcon_snapshots(config: &RunConfig, events: &[EpochRecord]) -> Result<Vec<EpochSnapshot>, HarnessError> {
    let mut snapshots: Vec<EpochSnapshot> = events
        .iter()
        .map(|r| EpochSnapshot { m: r.event.m, gamma: r.event.gamma, model: r.event.model_used.clone() })
        .collect();
    let next_m = events.last().map_or(1, |r| r.event.m + 1);
    let model = events.last().map_or_else(
        || LinearModel::zeros(config.env.num_arms, config.env.context_dim),
        |r| r.event.next_model.clone(),
    );
    snapshots.push(EpochSnapshot { m: next_m, gamma: epoch_gamma(config, next_m)?, model });
    Ok(snapshots)
}

/// `γ_m` as the agent computes it for this configuration.
pub fn epoch_gamma(config: &RunConfig, m: usize) -> Result<f64, HarnessError> {
    let schedule = EpochSchedule::new(config.params.tau1)?;
    let num_params = config.env.num_arms * (config.env.context_dim + 1);
    Ok(gamma_for_epoch(m, &schedule, &config.params.rates(num_params), config.env.num_arms)?)
}

/// Closed-form summary of an environment's best linear approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub spec: EnvSpec,
    pub fhat_star: LinearModel,
    pub b: f64,
    pub big_b: f64,
}

pub fn oracle_summary(spec: &EnvSpec) -> Result<OracleSummary, HarnessError> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Diagnostics);
    let b = approximation_error_b(spec, 0, &mut rng)?.closed_form.expect("closed form");
    let big_b = crate::env::worst_case_error_b(spec, 0, &mut rng)?.closed_form.expect("closed form");
    Ok(OracleSummary { spec: spec.clone(), fhat_star: best_linear_fit_uniform(spec)?, b, big_b })
}
