use rayon::prelude::*;

use crate::stats::{Accumulator, Estimate};

use super::config::RunConfig;
use super::run::{simulate, RunArtifacts};
use super::HarnessError;

/// Per-run totals kept by a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTotals {
    pub replication: usize,
    pub seed: u64,
    pub cum_e_regret: f64,
    pub realized_regret: f64,
    /// Uniform-arm distance from the final model to `f̂*`, for FALCON agents.
    pub final_mse_to_fhatstar: Option<f64>,
}

/// Per-round mean and standard error across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub agent: String,
    pub e_regret: Vec<Estimate>,
    pub cum_e_regret: Vec<Estimate>,
    pub runs: Vec<RunTotals>,
}

pub const SUMMARY_HEADER: &str = "t,mean_e_regret,se_e_regret,mean_cum_e_regret,se_cum_e_regret";

impl SuiteSummary {
    pub fn horizon(&self) -> u64 {
        self.e_regret.len() as u64
    }

    /// Mean per-round expected regret over rounds `from..=to`, averaged over replications.
    pub fn mean_regret(&self, from: u64, to: u64) -> f64 {
        assert!(1 <= from && from <= to && to <= self.horizon(), "window {from}..={to} out of range");
        let sum: f64 = self.e_regret[from as usize - 1..to as usize].iter().map(|e| e.mean).sum();
        sum / (to - from + 1) as f64
    }

    pub fn cumulative_at(&self, t: u64) -> Estimate {
        self.cum_e_regret[t as usize - 1]
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SUMMARY_HEADER}")?;
        for (i, (e, c)) in self.e_regret.iter().zip(&self.cum_e_regret).enumerate() {
            writeln!(out, "{},{},{},{},{}", i + 1, e.mean, e.std_err, c.mean, c.std_err)?;
        }
        Ok(())
    }
}

/// Runs every replication (seed `base_seed + r`) in parallel and aggregates
/// in replication order. Lemma diagnostics are skipped.
pub fn run_suite(config: &RunConfig) -> Result<SuiteSummary, HarnessError> {
    config.validate()?;
    let runs: Vec<Result<RunArtifacts, HarnessError>> = (0..config.replications)
        .into_par_iter()
        .map(|r| simulate(config, config.base_seed.wrapping_add(r as u64), false))
        .collect();
    let mut artifacts = Vec::with_capacity(runs.len());
    for (index, run) in runs.into_iter().enumerate() {
        artifacts.push(run.map_err(|e| HarnessError::Replication { index, source: Box::new(e) })?);
    }
    Ok(aggregate(&artifacts))
}

pub fn aggregate(runs: &[RunArtifacts]) -> SuiteSummary {
    let horizon = runs.first().map_or(0, |r| r.trace.len());
    let mut per_round = vec![Accumulator::default(); horizon];
    let mut cumulative = vec![Accumulator::default(); horizon];
    for run in runs {
        for (i, row) in run.trace.rows().iter().enumerate() {
            per_round[i].push(row.e_regret);
            cumulative[i].push(row.cum_e_regret);
        }
    }
    let totals = runs
        .iter()
        .enumerate()
        .map(|(replication, run)| RunTotals {
            replication,
            seed: run.seed,
            cum_e_regret: run.trace.cumulative(),
            realized_regret: run.realized_regret,
            final_mse_to_fhatstar: run.events.last().map(|e| e.mse_to_fhatstar),
        })
        .collect();
    SuiteSummary {
        agent: runs.first().map_or_else(String::new, |r| r.agent.clone()),
        e_regret: per_round.iter().map(Accumulator::finish).collect(),
        cum_e_regret: cumulative.iter().map(Accumulator::finish).collect(),
        runs: totals,
    }
}

/// Cumulative expected regret at fixed checkpoints, one column per config.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub checkpoints: Vec<u64>,
    pub labels: Vec<String>,
    /// `cells[c][i]` is column `c` at checkpoint `i`.
    pub cells: Vec<Vec<Estimate>>,
}

impl ComparisonTable {
    pub fn column(&self, label: &str) -> Option<&[Estimate]> {
        self.labels.iter().position(|l| l == label).map(|i| self.cells[i].as_slice())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["checkpoint".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_mean"));
            header.push(format!("{l}_se"));
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.checkpoints.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for col in &self.cells {
                row.push(col[i].mean.to_string());
                row.push(col[i].std_err.to_string());
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `T/8, T/4, T/2, T`, each at least 1, without repeats.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut cps: Vec<u64> = [8, 4, 2, 1].iter().map(|d| (horizon / d).max(1)).collect();
    cps.dedup();
    cps
}

/// Runs each config as a suite and tabulates cumulative regret at the checkpoints.
///
/// All configs must share the environment and horizon. Columns are labelled
/// by agent kind, with `#i` appended when a kind repeats.
pub fn compare(configs: &[RunConfig]) -> Result<ComparisonTable, HarnessError> {
    if configs.len() < 2 {
        return Err(HarnessError::Mismatch("compare needs at least two configs".into()));
    }
    let first = &configs[0];
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.env != first.env {
            return Err(HarnessError::Mismatch(format!("config {i} uses a different environment than config 0")));
        }
        if c.horizon != first.horizon {
            return Err(HarnessError::Mismatch(format!(
                "config {i} has horizon {} but config 0 has {}",
                c.horizon, first.horizon
            )));
        }
    }
    let checkpoints = checkpoints(first.horizon);
    let mut labels = Vec::new();
    let mut cells = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let summary = run_suite(c)?;
        let kind = c.agent.as_str();
        let repeated = configs.iter().filter(|o| o.agent == c.agent).count() > 1;
        labels.push(if repeated { format!("{kind}#{i}") } else { kind.to_string() });
        cells.push(checkpoints.iter().map(|&t| summary.cumulative_at(t)).collect());
    }
    Ok(ComparisonTable { checkpoints, labels, cells })
}
