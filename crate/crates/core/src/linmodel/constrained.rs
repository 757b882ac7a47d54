//! Least squares on one batch subject to a mean-squared-error budget on another.
//!
//! ```text
//! min_f  (1/|S|) Σ_S (f − r)²   s.t.   (1/|S′|) Σ_{S′} (f − r)² ≤ α + β
//! ```
//!
//! `α` is the best achievable mean squared error on `S′` and `β > 0` the slack,
//! so the passive ERM is strictly feasible and strong duality holds. The
//! Lagrangian dual `g(λ) = min_f L(f, λ)` is concave in one variable, and each
//! evaluation is one weighted least-squares fit. By the envelope theorem
//! `g′(λ)` equals the constraint residual of the λ-minimiser, which is
//! nonincreasing in `λ`; the search brackets its sign change by doubling and
//! then bisects on it.

use thiserror::Error;

use super::{fit_ols, fit_weighted, normalized_sse, DataBatch, Fit, LinearModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("constraint slack must be positive and finite, got {0}")]
    NonPositiveSlack(f64),
    #[error("dual search tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no feasible multiplier up to lambda_max = {lambda_max:e}; residual there is {residual:e}")]
    NoBracket { lambda_max: f64, residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The budget on the passive batch: `normalized_sse(f, passive) ≤ alpha + slack`.
#[derive(Debug, Clone)]
pub struct ConstraintSpec<'a> {
    passive: &'a DataBatch,
    alpha: f64,
    slack: f64,
}

impl<'a> ConstraintSpec<'a> {
    /// Computes `alpha` from the passive ERM.
    pub fn new(passive: &'a DataBatch, slack: f64) -> Result<Self, SolveError> {
        if !(slack > 0.0 && slack.is_finite()) {
            return Err(SolveError::NonPositiveSlack(slack));
        }
        let alpha = normalized_sse(&fit_ols(passive).model, passive);
        Ok(Self { passive, alpha, slack })
    }

    pub fn passive(&self) -> &DataBatch {
        self.passive
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn budget(&self) -> f64 {
        self.alpha + self.slack
    }

    /// `normalized_sse(model, passive) − alpha − slack`; feasible iff `≤ 0`.
    pub fn residual(&self, model: &LinearModel) -> f64 {
        normalized_sse(model, self.passive) - self.budget()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSearch {
    /// Bisection stops once the bracket is narrower than `lambda_tol·max(1, λ_R)`.
    pub lambda_tol: f64,
    /// Accuracy threshold on constraint residuals.
    pub residual_tol: f64,
    pub lambda_max: f64,
}

impl Default for DualSearch {
    fn default() -> Self {
        Self { lambda_tol: 1e-8, residual_tol: 1e-6, lambda_max: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    /// Final multiplier; the returned model is `fit_weighted(active, passive, lambda)`.
    pub lambda: f64,
    pub alpha: f64,
    pub slack: f64,
    /// Mean squared error of the returned model on the passive batch.
    pub constraint_value: f64,
    /// `constraint_value − alpha − slack`.
    pub residual: f64,
    /// Active-batch mean squared error of the returned model.
    pub primal: f64,
    /// `g(lambda)`.
    pub dual: f64,
    pub duality_gap: f64,
    /// Weighted-regression calls made.
    pub evaluations: usize,
    pub ridge_used: bool,
}

impl DualReport {
    pub fn feasible(&self, tol: f64) -> bool {
        self.residual <= tol
    }

    pub fn complementary_slackness(&self, tol: f64) -> bool {
        self.lambda <= tol || self.residual.abs() <= tol
    }
}

/// Dual function `g(λ)` and its minimiser.
pub fn dual_value(active: &DataBatch, cons: &ConstraintSpec<'_>, lambda: f64) -> Result<(f64, Fit), SolveError> {
    let fit = fit_weighted(active, cons.passive, lambda)?;
    let g = normalized_sse(&fit.model, active) + lambda * cons.residual(&fit.model);
    Ok((g, fit))
}

/// Solves the constrained regression through its Lagrangian dual.
pub fn constrained_fit(
    active: &DataBatch,
    cons: &ConstraintSpec<'_>,
    search: &DualSearch,
) -> Result<(LinearModel, DualReport), SolveError> {
    if !(search.lambda_tol > 0.0) {
        return Err(SolveError::InvalidTolerance(search.lambda_tol));
    }
    let mut evaluations = 0;
    let mut eval = |lambda: f64| -> Result<(Fit, f64), SolveError> {
        evaluations += 1;
        let fit = fit_weighted(active, cons.passive, lambda)?;
        let residual = cons.residual(&fit.model);
        Ok((fit, residual))
    };

    if active.is_empty() {
        // Every model ties on an empty objective and g(λ) = −λ·slack, so λ* = 0;
        // pick the passive ERM, which is feasible.
        return Ok(finish(active, cons, fit_ols(cons.passive), 0.0, 1));
    }

    let (unconstrained, residual) = eval(0.0)?;
    if residual <= 0.0 {
        return Ok(finish(active, cons, unconstrained, 0.0, evaluations));
    }

    // Bracket: residual(lo) > 0 ≥ residual(hi).
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut hi_fit = loop {
        let (fit, residual) = eval(hi)?;
        if residual <= 0.0 {
            break fit;
        }
        lo = hi;
        hi *= 2.0;
        if hi > search.lambda_max {
            return Err(SolveError::NoBracket { lambda_max: search.lambda_max, residual });
        }
    };

    while hi - lo > search.lambda_tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (fit, residual) = eval(mid)?;
        if residual > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            hi_fit = fit;
        }
    }
    Ok(finish(active, cons, hi_fit, hi, evaluations))
}

fn finish(active: &DataBatch, cons: &ConstraintSpec<'_>, fit: Fit, lambda: f64, evaluations: usize) -> (LinearModel, DualReport) {
    let constraint_value = normalized_sse(&fit.model, cons.passive);
    let residual = constraint_value - cons.budget();
    let primal = normalized_sse(&fit.model, active);
    let dual = primal + lambda * residual;
    let report = DualReport {
        lambda,
        alpha: cons.alpha,
        slack: cons.slack,
        constraint_value,
        residual,
        primal,
        dual,
        duality_gap: primal - dual,
        evaluations,
        ridge_used: fit.used_ridge(),
    };
    (fit.model, report)
}
