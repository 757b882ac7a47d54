//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export returns a JSON string; the `*_json` functions hold the logic
//! and are callable natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use efalcon::env::{best_linear_fit_uniform, Context, EnvKind, EnvSpec, MeanRewardOracle, RewardModel};
use efalcon::falcon::action_kernel;
use efalcon::harness::{oracle_summary, run_trace, AgentKind, AgentParams, EpsilonChoice, RunConfig};

/// Longest horizon the page may request.
pub const MAX_HORIZON: u64 = 1 << 17;

const MAX_POINTS: usize = 400;

fn spec_for(kind: &str, theta: f64) -> Result<EnvSpec, String> {
    let kind: EnvKind = kind.parse().map_err(|e| format!("{e}"))?;
    let spec = match kind {
        EnvKind::StepFunction => EnvSpec::step_function(),
        EnvKind::SensitivityFamily => EnvSpec::sensitivity_family(theta),
        EnvKind::RealizableLinear => EnvSpec::realizable_linear(2, 1),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// True mean rewards and the best linear fit on a grid of `points` contexts.
pub fn oracle_curves_json(kind: &str, theta: f64, points: usize) -> Result<Value, String> {
    let spec = spec_for(kind, theta)?;
    let truth = MeanRewardOracle::new(&spec).map_err(|e| e.to_string())?;
    let fit = best_linear_fit_uniform(&spec).map_err(|e| e.to_string())?;
    let summary = oracle_summary(&spec).map_err(|e| e.to_string())?;
    let points = points.clamp(2, 2000);
    let xs: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect();
    let ctx: Vec<Context> = xs.iter().map(|&x| Context::scalar(x).expect("grid is inside (0,1)")).collect();
    let curves = |model: &dyn RewardModel| -> Vec<Vec<f64>> {
        (0..spec.num_arms).map(|a| ctx.iter().map(|x| model.mean(x, a)).collect()).collect()
    };
    Ok(json!({
        "x": xs,
        "truth": curves(&truth),
        "fhat_star": curves(&fit),
        "weights": (0..spec.num_arms).map(|a| fit.arm_weights(a).to_vec()).collect::<Vec<_>>(),
        "b": summary.b,
        "big_b": summary.big_b,
    }))
}

/// Inverse-gap-weighted probabilities for one context's predictions.
pub fn kernel_probs_json(predictions: &[f64], gamma: f64) -> Result<Value, String> {
    if predictions.len() < 2 {
        return Err("need predictions for at least two arms".into());
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(format!("gamma must be positive and finite, got {gamma}"));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err("predictions must be finite".into());
    }
    let kernel = action_kernel(predictions, gamma);
    Ok(json!({
        "probs": kernel.probs(),
        "best": kernel.best(),
        "estimated_regret": kernel.estimated_regret(predictions),
        "bound": predictions.len() as f64 / gamma,
    }))
}

/// One simulated run, with the cumulative regret curve thinned to at most
/// a few hundred points.
pub fn simulate_regret_json(
    kind: &str,
    theta: f64,
    agent: &str,
    epsilon: f64,
    horizon: u64,
    seed: u64,
) -> Result<Value, String> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(format!("horizon must lie in 1..={MAX_HORIZON}"));
    }
    let config = RunConfig {
        env: spec_for(kind, theta)?,
        agent: agent.parse::<AgentKind>()?,
        params: AgentParams { epsilon: EpsilonChoice::Fixed(epsilon), ..AgentParams::default() },
        horizon,
        ..RunConfig::default()
    };
    let run = run_trace(&config, seed).map_err(|e| e.to_string())?;
    let rows = run.trace.rows();
    let stride = rows.len().div_ceil(MAX_POINTS);
    let (t, cum): (Vec<u64>, Vec<f64>) = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| (i + 1) % stride == 0 || i + 1 == rows.len())
        .map(|(_, r)| (r.t, r.cum_e_regret))
        .unzip();
    let events: Vec<Value> = run
        .events
        .iter()
        .map(|e| {
            json!({
                "m": e.event.m,
                "tau_end": e.event.tau_end,
                "gamma": e.event.gamma,
                "lambda": e.event.update.constraint.as_ref().map(|c| c.report.lambda),
                "mse_to_fhatstar": e.mse_to_fhatstar,
            })
        })
        .collect();
    Ok(json!({
        "agent": run.agent,
        "t": t,
        "cum_regret": cum,
        "events": events,
        "final_weights": run.final_model().map(|m| (0..m.num_arms()).map(|a| m.arm_weights(a).to_vec()).collect::<Vec<_>>()),
    }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn oracle_curves(kind: &str, theta: f64, points: usize) -> Result<String, JsValue> {
    to_js(oracle_curves_json(kind, theta, points))
}

#[wasm_bindgen]
pub fn kernel_probs(predictions: Vec<f64>, gamma: f64) -> Result<String, JsValue> {
    to_js(kernel_probs_json(&predictions, gamma))
}

#[wasm_bindgen]
pub fn simulate_regret(
    kind: &str,
    theta: f64,
    agent: &str,
    epsilon: f64,
    horizon: u32,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(simulate_regret_json(kind, theta, agent, epsilon, horizon as u64, seed as u64))
}
