//! Artifact files written by runs and suites, and the reader used to re-run
//! diagnostics from a run directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diag::{lemma_suite, EpochSnapshot, LemmaInput, LemmaReport};
use crate::linmodel::LinearModel;

use super::config::RunConfig;
use super::run::{epoch_gamma, RunArtifacts};
use super::suite::{ComparisonTable, SuiteSummary};
use super::HarnessError;

pub const EVENTS_HEADER: &str = "m,tau_start,tau_end,gamma,alpha,slack,lambda_star,duality_gap,mse_to_fhatstar";

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    fill(&mut out).and_then(|_| out.flush()).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_events<W: Write>(artifacts: &RunArtifacts, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{EVENTS_HEADER}")?;
    for r in &artifacts.events {
        let e = &r.event;
        let (alpha, slack, lambda, gap) = match &e.update.constraint {
            Some(c) => (
                c.alpha.to_string(),
                c.slack.to_string(),
                c.report.lambda.to_string(),
                c.report.duality_gap.to_string(),
            ),
            None => Default::default(),
        };
        writeln!(
            out,
            "{},{},{},{},{alpha},{slack},{lambda},{gap},{}",
            e.m, e.tau_start, e.tau_end, e.gamma, r.mse_to_fhatstar
        )?;
    }
    Ok(())
}

/// One row per (epoch, arm): `m,arm,w0,w1,...`, arms numbered from 1.
pub fn write_models<W: Write>(snapshots: &[EpochSnapshot], context_dim: usize, mut out: W) -> std::io::Result<()> {
    let weights: Vec<String> = (0..=context_dim).map(|j| format!("w{j}")).collect();
    writeln!(out, "m,arm,{}", weights.join(","))?;
    for s in snapshots {
        for arm in 0..s.model.num_arms() {
            let w: Vec<String> = s.model.arm_weights(arm).iter().map(f64::to_string).collect();
            writeln!(out, "{},{},{}", s.m, arm + 1, w.join(","))?;
        }
    }
    Ok(())
}

fn write_run_summary<W: Write>(artifacts: &RunArtifacts, mut out: W) -> std::io::Result<()> {
    writeln!(out, "seed = {}", artifacts.seed)?;
    writeln!(out, "agent = {}", artifacts.agent)?;
    if let Some(eps) = artifacts.epsilon {
        writeln!(out, "epsilon = {eps}")?;
    }
    writeln!(out, "rounds = {}", artifacts.trace.len())?;
    writeln!(out, "cum_e_regret = {}", artifacts.trace.cumulative())?;
    writeln!(out, "realized_regret = {}", artifacts.realized_regret)?;
    writeln!(out, "epochs_completed = {}", artifacts.events.len())?;
    match artifacts.incomplete_epoch {
        Some(inc) => writeln!(out, "incomplete_epoch = {} ({} of {} rounds)", inc.m, inc.rounds_played, inc.epoch_length)?,
        None => writeln!(out, "incomplete_epoch = none")?,
    }
    if let Some(mse) = artifacts.events.last().map(|e| e.mse_to_fhatstar) {
        writeln!(out, "final_mse_to_fhatstar = {mse}")?;
    }
    if let Some(report) = &artifacts.lemma {
        writeln!(out, "lemma_checks_failed = {}", report.failures().count())?;
    }
    Ok(())
}

/// Writes `config.txt`, `trace.csv`, `events.csv`, `models.csv`,
/// `summary.txt` and, when diagnostics ran, `lemma.csv`.
pub fn write_run(dir: &Path, config: &RunConfig, artifacts: &RunArtifacts) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_file(&dir.join("config.txt"), |o| o.write_all(config.serialize().as_bytes()))?;
    write_file(&dir.join("trace.csv"), |o| artifacts.trace.write_csv(o))?;
    write_file(&dir.join("events.csv"), |o| write_events(artifacts, o))?;
    write_file(&dir.join("models.csv"), |o| write_models(&artifacts.snapshots, config.env.context_dim, o))?;
    write_file(&dir.join("summary.txt"), |o| write_run_summary(artifacts, o))?;
    if let Some(report) = &artifacts.lemma {
        write_file(&dir.join("lemma.csv"), |o| report.write_csv(o))?;
    }
    Ok(())
}

/// Writes `config.txt`, `summary.csv` (per-round aggregates) and `runs.csv`.
pub fn write_suite(dir: &Path, config: &RunConfig, summary: &SuiteSummary) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_file(&dir.join("config.txt"), |o| o.write_all(config.serialize().as_bytes()))?;
    write_file(&dir.join("summary.csv"), |o| summary.write_csv(o))?;
    write_file(&dir.join("runs.csv"), |o| {
        writeln!(o, "replication,seed,cum_e_regret,realized_regret,final_mse_to_fhatstar")?;
        for r in &summary.runs {
            let mse = r.final_mse_to_fhatstar.map(|v| v.to_string()).unwrap_or_default();
            writeln!(o, "{},{},{},{},{mse}", r.replication, r.seed, r.cum_e_regret, r.realized_regret)?;
        }
        Ok(())
    })
}

pub fn write_comparison(dir: &Path, table: &ComparisonTable) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_file(&dir.join("comparison.csv"), |o| table.write_csv(o))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Parses `models.csv` back into per-epoch models.
pub fn read_models(text: &str, num_arms: usize, context_dim: usize) -> Result<Vec<(usize, LinearModel)>, HarnessError> {
    let bad = |line: usize, why: &str| HarnessError::Artifact(format!("models.csv line {line}: {why}"));
    let mut by_epoch: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != context_dim + 3 {
            return Err(bad(i + 1, "wrong number of fields"));
        }
        let m: usize = fields[0].parse().map_err(|_| bad(i + 1, "bad epoch"))?;
        let arm: usize = fields[1].parse().map_err(|_| bad(i + 1, "bad arm"))?;
        let w: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i + 1, "bad weight"))?;
        let rows = by_epoch.entry(m).or_default();
        if arm != rows.len() + 1 {
            return Err(bad(i + 1, "arms out of order"));
        }
        rows.push(w);
    }
    by_epoch
        .into_iter()
        .map(|(m, rows)| {
            if rows.len() != num_arms {
                return Err(HarnessError::Artifact(format!("models.csv: epoch {m} has {} arms", rows.len())));
            }
            Ok((m, LinearModel::from_arm_weights(rows)?))
        })
        .collect()
}

fn summary_value<'a>(summary: &'a str, key: &str) -> Option<&'a str> {
    summary.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == key).then(|| v.trim())
    })
}

/// Recomputes the lemma report from `config.txt`, `models.csv` and the seed
/// in `summary.txt` of a run directory.
pub fn rerun_diagnostics(dir: &Path) -> Result<LemmaReport, HarnessError> {
    let config = RunConfig::parse(&read(&dir.join("config.txt"))?)?;
    let summary = read(&dir.join("summary.txt"))?;
    let seed: u64 = summary_value(&summary, "seed")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Artifact("summary.txt has no seed".into()))?;
    let epsilon: f64 = summary_value(&summary, "epsilon").and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let models = read_models(&read(&dir.join("models.csv"))?, config.env.num_arms, config.env.context_dim)?;
    let snapshots = models
        .into_iter()
        .map(|(m, model)| Ok(EpochSnapshot { m, gamma: epoch_gamma(&config, m)?, model }))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let spec = config.env.clone().with_seed(seed);
    let input = LemmaInput { spec: &spec, epsilon, epochs: &snapshots, num_mc: config.mc_samples, seed };
    Ok(lemma_suite(&input)?)
}

/// `dir`, or `run.output_dir` from the config, or `fallback`.
pub fn output_dir(explicit: Option<&Path>, config: &RunConfig, fallback: &str) -> PathBuf {
    explicit.map(Path::to_path_buf).or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from(fallback))
}
