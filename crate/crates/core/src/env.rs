//! Stochastic contextual-bandit environments.
//!
//! Contexts are drawn uniformly from the open unit cube `(0,1)^d`. Each
//! environment exposes its true conditional mean reward `f*(x, a)` and, for the
//! two misspecified one-dimensional families, closed forms for the best linear
//! approximation under uniformly random arms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linmodel::LinearModel;
use crate::rng::{self, SimRng, Stream};
use crate::stats::{Accumulator, Estimate};

pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const MAX_THETA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arm index {arm} out of range for {num_arms} arms")]
    InvalidArm { arm: usize, num_arms: usize },
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("context coordinate {0} outside the open unit interval")]
    InvalidContext(f64),
    #[error("context has {got} coordinates, environment expects {expected}")]
    ContextDimension { expected: usize, got: usize },
}

/// A point in the context space `(0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(values: Vec<f64>) -> Result<Self, EnvError> {
        if let Some(&bad) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(EnvError::InvalidContext(bad));
        }
        Ok(Self(values))
    }

    pub fn scalar(x: f64) -> Result<Self, EnvError> {
        Self::new(vec![x])
    }

    /// Skips the range check; used for limits such as `x → 0⁺` in tests and plots.
    pub fn unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// First coordinate; the whole context for the one-dimensional families.
    pub fn first(&self) -> f64 {
        self.0[0]
    }
}

/// Draws a context uniformly from `(0,1)^dim`.
pub fn sample_uniform_context<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Context {
    let values = (0..dim)
        .map(|_| loop {
            // gen::<f64>() is in [0,1); reject the endpoint.
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        })
        .collect();
    Context(values)
}

/// Anything that assigns a mean reward to every (context, arm) pair.
pub trait RewardModel {
    fn num_arms(&self) -> usize;

    /// Mean reward for a valid arm. Panics on an out-of-range arm.
    fn mean(&self, x: &Context, arm: usize) -> f64;

    /// Greedy arm; ties go to the lowest index.
    fn greedy_arm(&self, x: &Context) -> usize {
        let mut best = 0;
        let mut best_value = self.mean(x, 0);
        for arm in 1..self.num_arms() {
            let v = self.mean(x, arm);
            if v > best_value {
                best = arm;
                best_value = v;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    StepFunction,
    SensitivityFamily,
    RealizableLinear,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::StepFunction => "step_function",
            EnvKind::SensitivityFamily => "sensitivity_family",
            EnvKind::RealizableLinear => "realizable_linear",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step_function" | "step" => Ok(EnvKind::StepFunction),
            "sensitivity_family" | "sensitivity" => Ok(EnvKind::SensitivityFamily),
            "realizable_linear" | "realizable" => Ok(EnvKind::RealizableLinear),
            other => Err(EnvError::InvalidSpec(format!("unknown environment kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Jump width of the sensitivity family; `None` for the other kinds.
    pub theta: Option<f64>,
    pub noise_sd: f64,
    pub num_arms: usize,
    pub context_dim: usize,
    pub seed: u64,
    pub clip_rewards: bool,
}

impl EnvSpec {
    pub fn step_function() -> Self {
        Self {
            kind: EnvKind::StepFunction,
            theta: None,
            noise_sd: DEFAULT_NOISE_SD,
            num_arms: 2,
            context_dim: 1,
            seed: 0,
            clip_rewards: false,
        }
    }

    pub fn sensitivity_family(theta: f64) -> Self {
        Self {
            kind: EnvKind::SensitivityFamily,
            theta: Some(theta),
            ..Self::step_function()
        }
    }

    pub fn realizable_linear(num_arms: usize, context_dim: usize) -> Self {
        Self {
            kind: EnvKind::RealizableLinear,
            theta: None,
            num_arms,
            context_dim,
            ..Self::step_function()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Self {
        self.noise_sd = noise_sd;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidSpec(msg));
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd));
        }
        if self.num_arms < 2 {
            return bad(format!("num_arms must be >= 2, got {}", self.num_arms));
        }
        if self.context_dim < 1 {
            return bad("context_dim must be >= 1".into());
        }
        match self.kind {
            EnvKind::StepFunction | EnvKind::SensitivityFamily => {
                if self.num_arms != 2 {
                    return bad(format!("{} has exactly 2 arms", self.kind));
                }
                if self.context_dim != 1 {
                    return bad(format!("{} has a one-dimensional context", self.kind));
                }
            }
            EnvKind::RealizableLinear => {}
        }
        match (self.kind, self.theta) {
            (EnvKind::SensitivityFamily, Some(t)) if t > 0.0 && t <= MAX_THETA => Ok(()),
            (EnvKind::SensitivityFamily, Some(t)) => bad(format!("theta must lie in (0, 0.05], got {t}")),
            (EnvKind::SensitivityFamily, None) => bad("sensitivity_family requires theta".into()),
            (_, Some(_)) => bad(format!("theta only applies to sensitivity_family, not {}", self.kind)),
            (_, None) => Ok(()),
        }
    }
}

/// Closed-form least-squares line for `g(x) = low + (high − low)·1{x > threshold}`
/// with `x ~ Unif(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFit {
    pub intercept: f64,
    pub slope: f64,
    /// `E[(line(x) − g(x))²]` at the optimum.
    pub residual_mse: f64,
}

pub fn step_target_fit(low: f64, high: f64, threshold: f64) -> StepFit {
    let jump = high - low;
    let q = 1.0 - threshold;
    // slope = Cov(x,g)/Var(x) = 12·jump·q(1−q)/2
    let slope = 6.0 * jump * q * (1.0 - q);
    let intercept = low + jump * q - slope / 2.0;
    let residual_mse = jump * jump * q * (1.0 - q) - slope * slope / 12.0;
    StepFit { intercept, slope, residual_mse }
}

/// The true mean reward `f*` of an environment.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanRewardOracle {
    /// Arm 1 is `1{x > 0.5}`, arm 2 is constant 0.5.
    Step,
    /// Arm 1 jumps from 0.1 to 1 at `1 − theta`; arm 2 is the line `1 + m_theta·x`.
    Sensitivity { theta: f64, m_theta: f64 },
    Linear(LinearModel),
}

impl MeanRewardOracle {
    pub fn new(spec: &EnvSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        Ok(match spec.kind {
            EnvKind::StepFunction => MeanRewardOracle::Step,
            EnvKind::SensitivityFamily => {
                let theta = spec.theta.expect("validated");
                let fit = sensitivity_arm1_fit(theta);
                let meet = fit.intercept + fit.slope * (1.0 - theta);
                MeanRewardOracle::Sensitivity { theta, m_theta: (meet - 1.0) / (1.0 - theta) }
            }
            EnvKind::RealizableLinear => {
                let mut rng = rng::stream(spec.seed, Stream::Structure);
                MeanRewardOracle::Linear(draw_bounded_linear(&mut rng, spec.num_arms, spec.context_dim))
            }
        })
    }

    pub fn mean_reward(&self, x: &Context, arm: usize) -> Result<f64, EnvError> {
        let num_arms = self.num_arms();
        if arm >= num_arms {
            return Err(EnvError::InvalidArm { arm, num_arms });
        }
        Ok(self.mean(x, arm))
    }

    pub fn optimal_action(&self, x: &Context) -> usize {
        self.greedy_arm(x)
    }
}

impl RewardModel for MeanRewardOracle {
    fn num_arms(&self) -> usize {
        match self {
            MeanRewardOracle::Linear(m) => m.num_arms(),
            _ => 2,
        }
    }

    fn mean(&self, x: &Context, arm: usize) -> f64 {
        match (self, arm) {
            (MeanRewardOracle::Step, 0) => {
                if x.first() > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            (MeanRewardOracle::Step, 1) => 0.5,
            (MeanRewardOracle::Sensitivity { theta, .. }, 0) => {
                if x.first() <= 1.0 - theta {
                    0.1
                } else {
                    1.0
                }
            }
            (MeanRewardOracle::Sensitivity { m_theta, .. }, 1) => 1.0 + m_theta * x.first(),
            (MeanRewardOracle::Linear(model), a) => model.value(x, a),
            (_, a) => panic!("arm {a} out of range"),
        }
    }
}

fn sensitivity_arm1_fit(theta: f64) -> StepFit {
    step_target_fit(0.1, 1.0, 1.0 - theta)
}

/// Per-arm linear functions whose values stay inside `[0,1]` on the unit cube.
fn draw_bounded_linear<R: Rng + ?Sized>(rng: &mut R, num_arms: usize, dim: usize) -> LinearModel {
    let rows = (0..num_arms)
        .map(|_| {
            let slopes: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5) / dim as f64).collect();
            let lo: f64 = slopes.iter().map(|s| s.min(0.0)).sum();
            let hi: f64 = slopes.iter().map(|s| s.max(0.0)).sum();
            let intercept = rng.gen_range(-lo..(1.0 - hi));
            std::iter::once(intercept).chain(slopes).collect()
        })
        .collect();
    LinearModel::from_arm_weights(rows).expect("rows share one width")
}

/// A running environment: the spec, its truth, and private context and reward streams.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    oracle: MeanRewardOracle,
    contexts: SimRng,
    rewards: SimRng,
}

impl Environment {
    pub fn new(spec: EnvSpec) -> Result<Self, EnvError> {
        let oracle = MeanRewardOracle::new(&spec)?;
        Ok(Self {
            contexts: rng::stream(spec.seed, Stream::Contexts),
            rewards: rng::stream(spec.seed, Stream::Rewards),
            spec,
            oracle,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn oracle(&self) -> &MeanRewardOracle {
        &self.oracle
    }

    pub fn num_arms(&self) -> usize {
        self.spec.num_arms
    }

    pub fn sample_context(&mut self) -> Context {
        sample_uniform_context(&mut self.contexts, self.spec.context_dim)
    }

    pub fn mean_reward(&self, x: &Context, arm: usize) -> Result<f64, EnvError> {
        self.check_context(x)?;
        self.oracle.mean_reward(x, arm)
    }

    /// One noisy reward for `arm`; consumes one normal draw.
    pub fn sample_reward(&mut self, x: &Context, arm: usize) -> Result<f64, EnvError> {
        let mean = self.mean_reward(x, arm)?;
        let z: f64 = self.rewards.sample(StandardNormal);
        Ok(self.finish_reward(mean + self.spec.noise_sd * z))
    }

    /// The full potential-outcome vector for one round; consumes one normal draw per arm.
    pub fn sample_reward_vector(&mut self, x: &Context) -> Vec<f64> {
        (0..self.spec.num_arms)
            .map(|arm| {
                let z: f64 = self.rewards.sample(StandardNormal);
                self.finish_reward(self.oracle.mean(x, arm) + self.spec.noise_sd * z)
            })
            .collect()
    }

    pub fn optimal_action(&self, x: &Context) -> usize {
        self.oracle.optimal_action(x)
    }

    fn finish_reward(&self, r: f64) -> f64 {
        if self.spec.clip_rewards {
            r.clamp(0.0, 1.0)
        } else {
            r
        }
    }

    fn check_context(&self, x: &Context) -> Result<(), EnvError> {
        if x.dim() != self.spec.context_dim {
            return Err(EnvError::ContextDimension { expected: self.spec.context_dim, got: x.dim() });
        }
        Ok(())
    }
}

/// Best linear model `f̂*` under uniform contexts and uniformly random arms.
///
/// The uniform-arm objective separates across arms, so each arm is fit on its
/// own. For the realizable family the truth is already linear and is returned
/// as is.
pub fn best_linear_fit_uniform(spec: &EnvSpec) -> Result<LinearModel, EnvError> {
    let oracle = MeanRewardOracle::new(spec)?;
    let rows = match &oracle {
        MeanRewardOracle::Step => {
            let arm1 = step_target_fit(0.0, 1.0, 0.5);
            vec![vec![arm1.intercept, arm1.slope], vec![0.5, 0.0]]
        }
        MeanRewardOracle::Sensitivity { theta, m_theta } => {
            let arm1 = sensitivity_arm1_fit(*theta);
            vec![vec![arm1.intercept, arm1.slope], vec![1.0, *m_theta]]
        }
        MeanRewardOracle::Linear(model) => return Ok(model.clone()),
    };
    Ok(LinearModel::from_arm_weights(rows).expect("two rows of width 2"))
}

/// Closed-form per-arm residual `E[(f̂*(x,a) − f*(x,a))²]`.
fn closed_form_arm_residuals(spec: &EnvSpec) -> Vec<f64> {
    match spec.kind {
        EnvKind::StepFunction => vec![step_target_fit(0.0, 1.0, 0.5).residual_mse, 0.0],
        EnvKind::SensitivityFamily => {
            vec![sensitivity_arm1_fit(spec.theta.expect("validated")).residual_mse, 0.0]
        }
        EnvKind::RealizableLinear => vec![0.0; spec.num_arms],
    }
}

/// A Monte Carlo estimate paired with the exact value where one is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub monte_carlo: Estimate,
    pub closed_form: Option<f64>,
}

/// Approximation error `b = E_x E_{a~Unif} (f̂*(x,a) − f*(x,a))²`.
///
/// The arm expectation is taken exactly; only contexts are sampled.
pub fn approximation_error_b<R: Rng + ?Sized>(
    spec: &EnvSpec,
    num_mc: usize,
    rng: &mut R,
) -> Result<ErrorEstimate, EnvError> {
    let residuals = closed_form_arm_residuals(spec);
    let closed = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let k = spec.num_arms as f64;
    let monte_carlo = residual_mc(spec, num_mc, rng, |sq| sq.iter().sum::<f64>() / k)?;
    Ok(ErrorEstimate { monte_carlo, closed_form: Some(closed) })
}

/// Worst-case kernel error `B = E_x max_a (f̂*(x,a) − f*(x,a))²`.
pub fn worst_case_error_b<R: Rng + ?Sized>(
    spec: &EnvSpec,
    num_mc: usize,
    rng: &mut R,
) -> Result<ErrorEstimate, EnvError> {
    // Every built-in family has at most one arm with nonzero residual, so
    // the pointwise max integrates to that arm's residual.
    let closed = closed_form_arm_residuals(spec).into_iter().fold(0.0, f64::max);
    let monte_carlo = residual_mc(spec, num_mc, rng, |sq| sq.iter().copied().fold(0.0, f64::max))?;
    Ok(ErrorEstimate { monte_carlo, closed_form: Some(closed) })
}

fn residual_mc<R, F>(spec: &EnvSpec, num_mc: usize, rng: &mut R, reduce: F) -> Result<Estimate, EnvError>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let truth = MeanRewardOracle::new(spec)?;
    let best = best_linear_fit_uniform(spec)?;
    let mut acc = Accumulator::default();
    let mut sq = vec![0.0; spec.num_arms];
    for _ in 0..num_mc {
        let x = sample_uniform_context(rng, spec.context_dim);
        for (arm, slot) in sq.iter_mut().enumerate() {
            *slot = (best.value(&x, arm) - truth.mean(&x, arm)).powi(2);
        }
        acc.push(reduce(&sq));
    }
    Ok(acc.finish())
}

/// `argmax_a f*(x,a)`, ties to the lowest arm.
pub fn optimal_policy_action(spec: &EnvSpec, x: &Context) -> Result<usize, EnvError> {
    Ok(MeanRewardOracle::new(spec)?.optimal_action(x))
}
