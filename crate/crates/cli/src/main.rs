use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use efalcon::env::{EnvKind, EnvSpec};
use efalcon::harness::{
    compare, oracle_summary, output_dir, rerun_diagnostics, run_one, run_suite, write_comparison, write_run,
    write_suite, HarnessError, RunConfig,
};

#[derive(Parser)]
#[command(name = "efalcon", version, about = "Simulate contextual bandit agents under misspecified linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace, epoch events, models and diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run seed; defaults to run.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run replications in parallel and write per-round averages.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate cumulative regret of several configs at T/8, T/4, T/2 and T.
    Compare {
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the lemma diagnostics of a stored run directory.
    Diag {
        #[arg(long)]
        run: PathBuf,
    },
    /// Print the best linear approximation and its errors b and B.
    Oracle {
        #[arg(long = "env")]
        kind: String,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 2)]
        arms: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Weight seed for the realizable family.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_non_convergence() { 2 } else { 1 })
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(RunConfig::parse(&text)?)
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config, seed, out } => {
            let config = load(&config)?;
            let seed = seed.unwrap_or(config.base_seed);
            let artifacts = run_one(&config, seed)?;
            let dir = output_dir(out.as_deref(), &config, "out/run");
            write_run(&dir, &config, &artifacts)?;
            println!("agent {} seed {seed}: {} rounds", artifacts.agent, artifacts.trace.len());
            println!("cumulative expected regret {:.6}", artifacts.trace.cumulative());
            println!("realized regret {:.6}", artifacts.realized_regret);
            if let Some(last) = artifacts.events.last() {
                println!("epochs completed {}, final mse to f-hat-star {:.6}", artifacts.events.len(), last.mse_to_fhatstar);
            }
            if let Some(inc) = artifacts.incomplete_epoch {
                println!("epoch {} incomplete: {} of {} rounds", inc.m, inc.rounds_played, inc.epoch_length);
            }
            if let Some(report) = &artifacts.lemma {
                println!("lemma checks failed {}", report.failures().count());
            }
            println!("wrote {}", dir.display());
        }
        Command::Suite { config, reps, out } => {
            let mut config = load(&config)?;
            if let Some(reps) = reps {
                config.replications = reps;
            }
            let summary = run_suite(&config)?;
            let dir = output_dir(out.as_deref(), &config, "out/suite");
            write_suite(&dir, &config, &summary)?;
            let t = summary.horizon();
            let cum = summary.cumulative_at(t);
            println!(
                "{} x{}: cumulative expected regret at T={t}: {:.4} ± {:.4}",
                summary.agent, config.replications, cum.mean, cum.std_err
            );
            println!("wrote {}", dir.display());
        }
        Command::Compare { configs, out } => {
            let configs = configs.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
            let table = compare(&configs)?;
            let mut text = Vec::new();
            table.write_csv(&mut text).expect("writing to memory");
            print!("{}", String::from_utf8_lossy(&text));
            if let Some(dir) = out.or_else(|| configs[0].output_dir.clone()) {
                write_comparison(&dir, &table)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Diag { run } => {
            let report = rerun_diagnostics(&run)?;
            let mut text = Vec::new();
            report.write_csv(&mut text).expect("writing to memory");
            print!("{}", String::from_utf8_lossy(&text));
            println!("# {} checks, {} failed", report.checks.len(), report.failures().count());
        }
        Command::Oracle { kind, theta, arms, dim, seed } => {
            let kind: EnvKind = kind.parse()?;
            let spec = match kind {
                EnvKind::StepFunction => EnvSpec { theta, ..EnvSpec::step_function() },
                EnvKind::SensitivityFamily => EnvSpec::sensitivity_family(theta.unwrap_or(0.05)),
                EnvKind::RealizableLinear => EnvSpec { theta, ..EnvSpec::realizable_linear(arms, dim) },
            }
            .with_seed(seed);
            let summary = oracle_summary(&spec)?;
            println!("env {kind}{}", spec.theta.map(|t| format!(" theta {t}")).unwrap_or_default());
            for arm in 0..summary.fhat_star.num_arms() {
                let w: Vec<String> = summary.fhat_star.arm_weights(arm).iter().map(|v| format!("{v:.6}")).collect();
                println!("f-hat-star arm {}: {}", arm + 1, w.join(" "));
            }
            println!("b {:.9}", summary.b);
            println!("B {:.9}", summary.big_b);
        }
    }
    Ok(())
}
