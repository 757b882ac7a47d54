use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::env::{Context, MeanRewardOracle, RewardModel};
use crate::rng::SimRng;

use super::agent::{Agent, Decision, EpochEvent, Phase};
use super::FalconError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinUcbConfig {
    /// Width multiplier on the confidence term.
    pub alpha: f64,
    pub ridge: f64,
    /// Rounds between parameter refreshes.
    pub batch_size: u64,
}

/// Small bonus width: exploration is close to negligible, as in the
/// step-function study.
impl Default for LinUcbConfig {
    fn default() -> Self {
        Self { alpha: 0.1, ridge: 1.0, batch_size: 100 }
    }
}

/// Disjoint-arm LinUCB whose parameters are refreshed once per batch.
#[derive(Debug, Clone)]
pub struct LinUcb {
    config: LinUcbConfig,
    gram: Vec<DMatrix<f64>>,
    target: Vec<DVector<f64>>,
    // snapshot used for decisions until the next refresh
    theta: Vec<DVector<f64>>,
    gram_inv: Vec<DMatrix<f64>>,
    batch: usize,
}

impl LinUcb {
    pub fn new(config: LinUcbConfig, num_arms: usize, context_dim: usize) -> Result<Self, FalconError> {
        if !(config.alpha >= 0.0 && config.ridge > 0.0 && config.batch_size >= 1) {
            return Err(FalconError::InvalidParams(format!(
                "linucb needs alpha >= 0, ridge > 0 and batch_size >= 1, got {config:?}"
            )));
        }
        if num_arms == 0 {
            return Err(FalconError::InvalidParams("at least one arm is required".into()));
        }
        let p = context_dim + 1;
        let gram = DMatrix::identity(p, p) * config.ridge;
        let mut agent = Self {
            config,
            gram: vec![gram; num_arms],
            target: vec![DVector::zeros(p); num_arms],
            theta: Vec::new(),
            gram_inv: Vec::new(),
            batch: 1,
        };
        agent.refresh();
        Ok(agent)
    }

    fn refresh(&mut self) {
        self.gram_inv = self
            .gram
            .iter()
            .map(|g| g.clone().cholesky().expect("ridge keeps the gram matrix positive definite").inverse())
            .collect();
        self.theta = self.gram_inv.iter().zip(&self.target).map(|(inv, b)| inv * b).collect();
    }

    /// Upper confidence bound of every arm under the current snapshot.
    pub fn scores(&self, x: &Context) -> Vec<f64> {
        let phi = features(x);
        self.theta
            .iter()
            .zip(&self.gram_inv)
            .map(|(theta, inv)| theta.dot(&phi) + self.config.alpha * (phi.dot(&(inv * &phi))).max(0.0).sqrt())
            .collect()
    }
}

fn features(x: &Context) -> DVector<f64> {
    DVector::from_iterator(x.dim() + 1, std::iter::once(1.0).chain(x.as_slice().iter().copied()))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

impl Agent for LinUcb {
    fn name(&self) -> &str {
        "linucb"
    }

    fn epoch(&self) -> usize {
        self.batch
    }

    fn act(&mut self, _t: u64, x: &Context, _rng: &mut SimRng) -> Result<Decision, FalconError> {
        Ok(Decision { arm: argmax(&self.scores(x)), phase: Phase::Active })
    }

    fn record(&mut self, t: u64, x: &Context, decision: Decision, reward: f64) -> Result<Option<EpochEvent>, FalconError> {
        let phi = features(x);
        let a = decision.arm;
        self.gram[a] += &phi * phi.transpose();
        self.target[a] += &phi * reward;
        if t % self.config.batch_size == 0 {
            self.refresh();
            self.batch += 1;
        }
        Ok(None)
    }
}

/// Uniformly random arms every round.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    num_arms: usize,
}

impl UniformRandom {
    pub fn new(num_arms: usize) -> Self {
        Self { num_arms }
    }
}

impl Agent for UniformRandom {
    fn name(&self) -> &str {
        "uniform"
    }

    fn epoch(&self) -> usize {
        1
    }

    fn act(&mut self, _t: u64, _x: &Context, rng: &mut SimRng) -> Result<Decision, FalconError> {
        Ok(Decision { arm: rng.gen_range(0..self.num_arms), phase: Phase::Passive })
    }

    fn record(&mut self, _: u64, _: &Context, _: Decision, _: f64) -> Result<Option<EpochEvent>, FalconError> {
        Ok(None)
    }
}

/// Plays the true optimal arm; zero expected regret by construction.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    truth: MeanRewardOracle,
}

impl OracleAgent {
    pub fn new(truth: MeanRewardOracle) -> Self {
        Self { truth }
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> &str {
        "oracle"
    }

    fn epoch(&self) -> usize {
        1
    }

    fn act(&mut self, _t: u64, x: &Context, _rng: &mut SimRng) -> Result<Decision, FalconError> {
        Ok(Decision { arm: self.truth.greedy_arm(x), phase: Phase::Active })
    }

    fn record(&mut self, _: u64, _: &Context, _: Decision, _: f64) -> Result<Option<EpochEvent>, FalconError> {
        Ok(None)
    }
}
