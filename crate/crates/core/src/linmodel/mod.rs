//! Per-arm linear reward models and their least-squares oracles.
//!
//! A model holds one weight vector `[w0, w1, …, w_d]` per arm and predicts
//! `w·φ(x)` with `φ(x) = [1, x₁, …, x_d]`. Fits solve the (row-weighted)
//! normal equations arm by arm; an arm whose design is rank deficient gets a
//! `1e-8·I` ridge term and is reported in [`Fit::ridge_arms`].

mod constrained;

pub use constrained::{constrained_fit, dual_value, ConstraintSpec, DualReport, DualSearch, SolveError};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::env::{Context, RewardModel};

pub const RIDGE: f64 = 1e-8;
/// Pivot ratio of the Cholesky factor below which a design counts as singular.
const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("arm index {arm} out of range for {num_arms} arms")]
    InvalidArm { arm: usize, num_arms: usize },
    #[error("context has {got} coordinates, model expects {expected}")]
    ContextDimension { expected: usize, got: usize },
    #[error("batches disagree on shape: ({0} arms, dim {1}) vs ({2} arms, dim {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("weight rows must all have length {expected}, found {got}")]
    RaggedWeights { expected: usize, got: usize },
    #[error("regression weight must be finite and >= 0, got {0}")]
    InvalidWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    num_arms: usize,
    context_dim: usize,
    /// Arm-major, `context_dim + 1` entries per arm.
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(num_arms: usize, context_dim: usize) -> Self {
        Self { num_arms, context_dim, weights: vec![0.0; num_arms * (context_dim + 1)] }
    }

    pub fn from_arm_weights(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let width = rows.first().map_or(1, Vec::len);
        if width == 0 {
            return Err(ModelError::RaggedWeights { expected: 1, got: 0 });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(ModelError::RaggedWeights { expected: width, got: bad.len() });
        }
        Ok(Self {
            num_arms: rows.len(),
            context_dim: width - 1,
            weights: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    /// Total parameter count `d = K·(d_x + 1)`.
    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn arm_weights(&self, arm: usize) -> &[f64] {
        let p = self.context_dim + 1;
        &self.weights[arm * p..(arm + 1) * p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, x: &Context, arm: usize) -> Result<f64, ModelError> {
        if arm >= self.num_arms {
            return Err(ModelError::InvalidArm { arm, num_arms: self.num_arms });
        }
        if x.dim() != self.context_dim {
            return Err(ModelError::ContextDimension { expected: self.context_dim, got: x.dim() });
        }
        Ok(self.value(x, arm))
    }

    /// Unchecked prediction; panics if `arm` is out of range.
    pub fn value(&self, x: &Context, arm: usize) -> f64 {
        let w = self.arm_weights(arm);
        w[0] + w[1..].iter().zip(x.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predictions(&self, x: &Context) -> Vec<f64> {
        (0..self.num_arms).map(|a| self.value(x, a)).collect()
    }

    /// Exact `E_x E_{a~Unif} (self(x,a) − other(x,a))²` for `x ~ Unif(0,1)^d`.
    pub fn uniform_mse(&self, other: &LinearModel) -> f64 {
        assert_eq!(
            (self.num_arms, self.context_dim),
            (other.num_arms, other.context_dim),
            "models must share a shape"
        );
        let p = self.context_dim + 1;
        // E[φφᵀ]: 1 on the intercept, 1/2 for first moments, 1/3 on the
        // diagonal, 1/4 off it.
        let moment = |i: usize, j: usize| match (i, j) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.5,
            _ if i == j => 1.0 / 3.0,
            _ => 0.25,
        };
        let mut total = 0.0;
        for arm in 0..self.num_arms {
            let diff: Vec<f64> = self
                .arm_weights(arm)
                .iter()
                .zip(other.arm_weights(arm))
                .map(|(a, b)| a - b)
                .collect();
            for i in 0..p {
                for j in 0..p {
                    total += diff[i] * diff[j] * moment(i, j);
                }
            }
        }
        total / self.num_arms as f64
    }
}

impl RewardModel for LinearModel {
    fn num_arms(&self) -> usize {
        self.num_arms
    }

    fn mean(&self, x: &Context, arm: usize) -> f64 {
        self.value(x, arm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub context: Context,
    pub arm: usize,
    pub reward: f64,
}

/// An append-only collection of `(context, arm, reward)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    num_arms: usize,
    context_dim: usize,
    rows: Vec<Observation>,
}

impl DataBatch {
    pub fn new(num_arms: usize, context_dim: usize) -> Self {
        Self { num_arms, context_dim, rows: Vec::new() }
    }

    pub fn from_rows(num_arms: usize, context_dim: usize, rows: Vec<Observation>) -> Result<Self, ModelError> {
        let mut batch = Self::new(num_arms, context_dim);
        for row in rows {
            batch.push(row)?;
        }
        Ok(batch)
    }

    /// Convenience constructor for scalar-context rows `(x, arm, reward)`.
    pub fn from_scalar_rows(num_arms: usize, rows: &[(f64, usize, f64)]) -> Result<Self, ModelError> {
        let rows = rows
            .iter()
            .map(|&(x, arm, reward)| Observation { context: Context::unchecked(vec![x]), arm, reward })
            .collect();
        Self::from_rows(num_arms, 1, rows)
    }

    pub fn push(&mut self, row: Observation) -> Result<(), ModelError> {
        if row.arm >= self.num_arms {
            return Err(ModelError::InvalidArm { arm: row.arm, num_arms: self.num_arms });
        }
        if row.context.dim() != self.context_dim {
            return Err(ModelError::ContextDimension { expected: self.context_dim, got: row.context.dim() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    fn same_shape(&self, other: &DataBatch) -> Result<(), ModelError> {
        if (self.num_arms, self.context_dim) != (other.num_arms, other.context_dim) {
            return Err(ModelError::ShapeMismatch(self.num_arms, self.context_dim, other.num_arms, other.context_dim));
        }
        Ok(())
    }
}

/// A fitted model and the arms that needed the ridge fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    pub ridge_arms: Vec<usize>,
}

impl Fit {
    pub fn used_ridge(&self) -> bool {
        !self.ridge_arms.is_empty()
    }
}

/// Per-arm accumulated `Σ w φφᵀ` and `Σ w r φ`.
struct NormalEquations {
    p: usize,
    gram: Vec<Vec<f64>>,
    rhs: Vec<Vec<f64>>,
    rows: Vec<usize>,
}

impl NormalEquations {
    fn new(num_arms: usize, context_dim: usize) -> Self {
        let p = context_dim + 1;
        Self {
            p,
            gram: vec![vec![0.0; p * p]; num_arms],
            rhs: vec![vec![0.0; p]; num_arms],
            rows: vec![0; num_arms],
        }
    }

    fn accumulate(&mut self, batch: &DataBatch, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let p = self.p;
        let mut phi = vec![0.0; p];
        for row in batch.rows() {
            phi[0] = 1.0;
            phi[1..].copy_from_slice(row.context.as_slice());
            let gram = &mut self.gram[row.arm];
            let rhs = &mut self.rhs[row.arm];
            for i in 0..p {
                let wi = weight * phi[i];
                rhs[i] += wi * row.reward;
                for j in 0..p {
                    gram[i * p + j] += wi * phi[j];
                }
            }
            self.rows[row.arm] += 1;
        }
    }

    fn solve(self) -> Fit {
        let p = self.p;
        let num_arms = self.rows.len();
        let mut weights = Vec::with_capacity(num_arms);
        let mut ridge_arms = Vec::new();
        for arm in 0..num_arms {
            if self.rows[arm] == 0 {
                weights.push(vec![0.0; p]);
                continue;
            }
            let gram = DMatrix::from_row_slice(p, p, &self.gram[arm]);
            let rhs = DVector::from_column_slice(&self.rhs[arm]);
            let (w, ridged) = solve_spd(gram, &rhs, self.rows[arm] < p);
            if ridged {
                ridge_arms.push(arm);
            }
            weights.push(w);
        }
        Fit { model: LinearModel::from_arm_weights(weights).expect("uniform width"), ridge_arms }
    }
}

/// Cholesky solve, retrying with `RIDGE·I` when the system is (near) singular.
fn solve_spd(gram: DMatrix<f64>, rhs: &DVector<f64>, force_ridge: bool) -> (Vec<f64>, bool) {
    if !force_ridge {
        if let Some(chol) = gram.clone().cholesky() {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d * d), hi.max(d * d)));
            if lo > CONDITION_FLOOR * hi {
                return (chol.solve(rhs).iter().copied().collect(), false);
            }
        }
    }
    let p = gram.nrows();
    let ridged = gram + DMatrix::identity(p, p) * RIDGE;
    let solution = match ridged.clone().cholesky() {
        Some(chol) => chol.solve(rhs),
        None => ridged.lu().solve(rhs).unwrap_or_else(|| DVector::zeros(p)),
    };
    (solution.iter().copied().collect(), true)
}

/// Unweighted least squares per arm. Arms without rows get zero weights.
pub fn fit_ols(batch: &DataBatch) -> Fit {
    let mut eqs = NormalEquations::new(batch.num_arms(), batch.context_dim());
    if !batch.is_empty() {
        eqs.accumulate(batch, 1.0 / batch.len() as f64);
    }
    eqs.solve()
}

/// Minimiser of `(1/|S|)·SSE_S + (λ/|S′|)·SSE_{S′}`.
///
/// Both terms are scaled by `1/(1+λ)`, which leaves the minimiser unchanged and
/// keeps the normal equations well scaled for large `λ`. With `λ = 0` this is
/// bit-for-bit [`fit_ols`] on `active`.
pub fn fit_weighted(active: &DataBatch, passive: &DataBatch, lambda: f64) -> Result<Fit, ModelError> {
    active.same_shape(passive)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ModelError::InvalidWeight(lambda));
    }
    let scale = 1.0 + lambda;
    let mut eqs = NormalEquations::new(active.num_arms(), active.context_dim());
    if !active.is_empty() {
        eqs.accumulate(active, 1.0 / (scale * active.len() as f64));
    }
    if !passive.is_empty() {
        eqs.accumulate(passive, lambda / (scale * passive.len() as f64));
    }
    Ok(eqs.solve())
}

pub fn sse(model: &LinearModel, batch: &DataBatch) -> f64 {
    batch.rows().iter().map(|r| (model.value(&r.context, r.arm) - r.reward).powi(2)).sum()
}

/// Mean squared residual; zero on an empty batch.
pub fn normalized_sse(model: &LinearModel, batch: &DataBatch) -> f64 {
    if batch.is_empty() {
        0.0
    } else {
        sse(model, batch) / batch.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_uniform_context, EnvSpec, MeanRewardOracle};
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn ctx(x: f64) -> Context {
        Context::unchecked(vec![x])
    }

    #[test]
    fn predict_examples() {
        let zero = LinearModel::zeros(3, 2);
        assert_eq!(zero.predict(&Context::unchecked(vec![0.3, 0.9]), 2).unwrap(), 0.0);
        let m = LinearModel::from_arm_weights(vec![vec![-0.25, 1.5], vec![0.7, 0.0]]).unwrap();
        assert_eq!(m.predict(&ctx(0.5), 0).unwrap(), 0.5);
        for x in [0.01, 0.4, 0.99] {
            assert_eq!(m.predict(&ctx(x), 1).unwrap(), 0.7);
        }
        assert_eq!(m.predict(&ctx(0.5), 2), Err(ModelError::InvalidArm { arm: 2, num_arms: 2 }));
        assert_eq!(m.num_params(), 4);
    }

    #[test]
    fn ols_single_point_uses_ridge() {
        let batch = DataBatch::from_scalar_rows(1, &[(0.0, 0, 0.3)]).unwrap();
        let fit = fit_ols(&batch);
        assert_eq!(fit.ridge_arms, vec![0]);
        let w = fit.model.arm_weights(0);
        assert!((w[0] - 0.3).abs() < 1e-7);
        assert!(w[1].abs() < 1e-7);
    }

    #[test]
    fn ols_two_points_interpolate() {
        let batch = DataBatch::from_scalar_rows(2, &[(0.0, 0, 0.0), (1.0, 0, 1.0)]).unwrap();
        let fit = fit_ols(&batch);
        assert!(!fit.ridge_arms.contains(&0));
        let w = fit.model.arm_weights(0);
        assert!(w[0].abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        // arm with no rows stays at zero and is not flagged
        assert_eq!(fit.model.arm_weights(1), &[0.0, 0.0]);
        assert!(fit.ridge_arms.is_empty());
    }

    #[test]
    fn ols_exact_recovery() {
        let truth = LinearModel::from_arm_weights(vec![vec![0.2, 0.5, -0.1], vec![0.6, -0.3, 0.2]]).unwrap();
        let mut rng = stream(1, Stream::Diagnostics);
        let mut batch = DataBatch::new(2, 2);
        for i in 0..100 {
            let x = sample_uniform_context(&mut rng, 2);
            let arm = i % 2;
            let reward = truth.value(&x, arm);
            batch.push(Observation { context: x, arm, reward }).unwrap();
        }
        let fit = fit_ols(&batch).model;
        for (a, b) in fit.weights().iter().zip(truth.weights()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ols_recovers_best_fit_on_step_labels() {
        let spec = EnvSpec::step_function();
        let truth = MeanRewardOracle::new(&spec).unwrap();
        let mut rng = stream(2, Stream::Diagnostics);
        let mut batch = DataBatch::new(2, 1);
        for _ in 0..1_000_000 {
            let x = sample_uniform_context(&mut rng, 1);
            let reward = truth.mean(&x, 0);
            batch.push(Observation { context: x, arm: 0, reward }).unwrap();
        }
        let w = fit_ols(&batch).model.arm_weights(0).to_vec();
        assert!((w[0] + 0.25).abs() < 0.01 && (w[1] - 1.5).abs() < 0.01, "{w:?}");
    }

    #[test]
    fn collinear_design_is_flagged() {
        let batch = DataBatch::from_scalar_rows(1, &[(0.4, 0, 0.1), (0.4, 0, 0.3), (0.4, 0, 0.2)]).unwrap();
        let fit = fit_ols(&batch);
        assert_eq!(fit.ridge_arms, vec![0]);
        assert!((fit.model.value(&ctx(0.4), 0) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn sse_examples() {
        let batch = DataBatch::from_scalar_rows(2, &[(0.5, 0, 1.0)]).unwrap();
        let zero = LinearModel::zeros(2, 1);
        assert_eq!(sse(&zero, &batch), 1.0);
        let interp = DataBatch::from_scalar_rows(1, &[(0.0, 0, 0.0), (1.0, 0, 1.0)]).unwrap();
        let line = LinearModel::from_arm_weights(vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(sse(&line, &interp), 0.0);
        assert_eq!(normalized_sse(&zero, &DataBatch::new(2, 1)), 0.0);
        let b3 = DataBatch::from_scalar_rows(2, &[(0.5, 0, 1.0), (0.5, 1, 2.0), (0.2, 0, 0.0)]).unwrap();
        assert_eq!(normalized_sse(&zero, &b3), sse(&zero, &b3) / 3.0);
    }

    fn random_batch(seed: u64, n: usize) -> DataBatch {
        use rand::Rng;
        let mut rng = stream(seed, Stream::Diagnostics);
        let mut batch = DataBatch::new(2, 1);
        for _ in 0..n {
            let x = sample_uniform_context(&mut rng, 1);
            let arm = rng.gen_range(0..2);
            let reward = rng.gen::<f64>();
            batch.push(Observation { context: x, arm, reward }).unwrap();
        }
        batch
    }

    #[test]
    fn weighted_limits() {
        let active = random_batch(3, 40);
        let passive = random_batch(4, 30);
        assert_eq!(fit_weighted(&active, &passive, 0.0).unwrap(), fit_ols(&active));
        let heavy = fit_weighted(&active, &passive, 1e12).unwrap().model;
        let passive_fit = fit_ols(&passive).model;
        for (a, b) in heavy.weights().iter().zip(passive_fit.weights()) {
            assert!((a - b).abs() < 1e-4);
        }
        for lambda in [0.1, 1.0, 37.0] {
            let same = fit_weighted(&active, &active, lambda).unwrap().model;
            for (a, b) in same.weights().iter().zip(fit_ols(&active).model.weights()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(fit_weighted(&active, &passive, -1.0).is_err());
        assert!(fit_weighted(&active, &DataBatch::new(3, 1), 1.0).is_err());
    }

    #[test]
    fn uniform_mse_matches_quadrature() {
        let f = LinearModel::from_arm_weights(vec![vec![0.1, 0.7, -0.2], vec![0.5, -0.4, 0.3]]).unwrap();
        let g = LinearModel::zeros(2, 2);
        let n = 400;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = Context::unchecked(vec![(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                total += (0..2).map(|a| f.value(&x, a).powi(2)).sum::<f64>() / 2.0 * h * h;
            }
        }
        assert!((f.uniform_mse(&g) - total).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn ols_is_permutation_invariant(seed in any::<u64>(), n in 5usize..60) {
            let batch = random_batch(seed, n);
            let mut rows = batch.rows().to_vec();
            rows.shuffle(&mut stream(seed ^ 0xabc, Stream::Agent));
            let shuffled = DataBatch::from_rows(2, 1, rows).unwrap();
            let a = fit_ols(&batch).model;
            let b = fit_ols(&shuffled).model;
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn ols_minimises_sse(seed in any::<u64>(), n in 6usize..40, dw in -0.5f64..0.5, dc in -0.5f64..0.5) {
            let batch = random_batch(seed, n);
            let fit = fit_ols(&batch);
            prop_assume!(!fit.used_ridge());
            let mut rows: Vec<Vec<f64>> = (0..2).map(|a| fit.model.arm_weights(a).to_vec()).collect();
            rows[0][0] += dc;
            rows[1][1] += dw;
            let perturbed = LinearModel::from_arm_weights(rows).unwrap();
            prop_assert!(sse(&fit.model, &batch) <= sse(&perturbed, &batch) + 1e-12);
        }
    }
}
