//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config validation error, 2 runtime
//! failure or numeric abort (partial results are still written).

mod verify;

pub use verify::{builtin_config, builtin_quadratic, verify_suite, VerifyCheck, PASS_RATE};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{self, GridAxis, RunConfig};
use crate::optimizers::Method;
use crate::par::{with_threads, Parallelism};

#[derive(Debug, Parser)]
#[command(name = "extrap", version, about = "Distributed large-batch SGD simulator with extrapolation")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Cap on evaluation threads. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run config.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Dotted-path override, e.g. hyperparams.lr_gamma=0.2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,
    /// Replaces master_seed.
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    /// Overrides as persisted in the manifest, `--seed` last.
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(s) = self.seed {
            o.push(format!("master_seed={s}"));
        }
        o
    }

    fn load(&self) -> Result<RunConfig> {
        RunConfig::load_with_overrides(&self.config, &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run all trials of one config and write the result files.
    Run(ConfigArgs),
    /// Run a hyperparameter grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// PATH=V1,V2,... (repeatable; the first axis varies slowest).
        #[arg(long = "grid", value_name = "PATH=V1,V2,...", required = true)]
        grid: Vec<String>,
    },
    /// Steps-to-epsilon across aggregate batch sizes.
    Speedup {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated KxB pairs, e.g. 1x4,2x4,4x4.
        #[arg(long, value_name = "KxB,...", value_delimiter = ',', required = true)]
        kb: Vec<String>,
        #[arg(long)]
        epsilon: f64,
        /// Candidate learning rates; the tuned stepsize is used when absent.
        #[arg(long, value_name = "LR,...", value_delimiter = ',')]
        lr_grid: Vec<f64>,
    },
    /// Run the built-in theory suite and print a pass/fail table.
    Verify {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run with smoothness probing and report the estimated L.
    Smoothness {
        #[command(flatten)]
        config: ConfigArgs,
        /// Probe every this many steps.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// List the available methods.
    ListMethods,
}

enum Outcome {
    Success,
    Failed,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let threads = cli.threads;
    match with_threads(threads, || dispatch(cli.command)) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Failed) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig { .. } => 1,
                _ => 2,
            }
        }
    }
}

/// Loads a config; any failure here is a validation error.
fn load(args: &ConfigArgs) -> Result<RunConfig> {
    args.load().map_err(|e| match e {
        Error::InvalidConfig { .. } => e,
        other => Error::config("config", format!("{}: {other}", args.config.display())),
    })
}

fn dispatch(command: Command) -> Result<Outcome> {
    let par = Parallelism::Rayon;
    match command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let result = harness::run(&cfg, par)?;
            harness::write_run(&args.out, &result, &args.overrides())?;
            print_run_summary(&result, &args.out);
            Ok(if result.any_aborted() { Outcome::Failed } else { Outcome::Success })
        }
        Command::Sweep { config, grid } => {
            let cfg = load(&config)?;
            let axes = grid.iter().map(|g| GridAxis::parse(g)).collect::<Result<Vec<_>>>()?;
            let result = harness::sweep(&cfg, &axes, par)?;
            write_sweep(&config.out, &result, &config.overrides())?;
            println!("{:>5}  {:<40} {:>24} {:>24}  aborted", "point", "settings", "final loss", "min grad_norm2");
            for (i, p) in result.points.iter().enumerate() {
                let mark = if result.best == Some(i) { "*" } else { " " };
                println!(
                    "{mark}{i:>4}  {:<40} {:>11.4e} ± {:<10.3e} {:>11.4e} ± {:<10.3e}  {}/{}",
                    settings_label(&p.settings),
                    p.final_loss_mean,
                    p.final_loss_std,
                    p.min_grad_norm2_mean,
                    p.min_grad_norm2_std,
                    p.aborted_trials,
                    p.trials
                );
            }
            if result.best_on_boundary {
                println!("best point lies on the grid boundary of: {}", result.boundary_axes.join(", "));
            }
            Ok(Outcome::Success)
        }
        Command::Speedup {
            config,
            kb,
            epsilon,
            lr_grid,
        } => {
            let cfg = load(&config)?;
            let kb_grid = kb.iter().map(|s| parse_kb(s)).collect::<Result<Vec<_>>>()?;
            let grid = (!lr_grid.is_empty()).then_some(lr_grid.as_slice());
            let result = harness::speedup_study(&cfg, &kb_grid, epsilon, grid, par)?;
            std::fs::create_dir_all(&config.out)?;
            harness::write_json(&config.out.join("speedup.json"), &result)?;
            harness::write_csv(&config.out.join("speedup.csv"), &result.rows)?;
            println!("epsilon {epsilon:e}, horizon {}, critical KB (order estimate) {:.1}", result.horizon_t, result.critical_kb);
            println!("{:>4} {:>5} {:>7} {:>12} {:>10}", "K", "B", "KB", "lr", "steps");
            for r in &result.rows {
                let steps = r.steps_to_epsilon.map_or_else(|| format!(">{}", result.horizon_t), |s| s.to_string());
                println!("{:>4} {:>5} {:>7} {:>12.4e} {:>10}", r.workers_k, r.local_batch_b, r.global_batch, r.lr_gamma, steps);
            }
            Ok(Outcome::Success)
        }
        Command::Verify { out } => {
            let checks = verify_suite(par)?;
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &checks {
                println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                harness::write_json(&dir.join("verify.json"), &checks)?;
            }
            Ok(if failed == 0 { Outcome::Success } else { Outcome::Failed })
        }
        Command::Smoothness { config, every } => {
            if every == 0 {
                return Err(Error::config("every", "must be at least 1"));
            }
            let mut cfg = load(&config)?;
            cfg.record_smoothness_every = every;
            let mut overrides = config.overrides();
            overrides.push(format!("record_smoothness_every={every}"));
            let result = harness::run(&cfg, par)?;
            harness::write_run(&config.out, &result, &overrides)?;
            let means: Vec<f64> = result
                .trials
                .iter()
                .map(|t| harness::mean_std(&t.smoothness).0)
                .collect();
            for (t, m) in result.trials.iter().zip(&means) {
                println!("trial {} seed {}: mean L {:.6e} over {} probes", t.trial, t.seed, m, t.smoothness.len());
            }
            let (m, s) = harness::mean_std(&means);
            println!("{}: mean estimated L {m:.6e} ± {s:.3e}", cfg.method.name());
            Ok(if result.any_aborted() { Outcome::Failed } else { Outcome::Success })
        }
        Command::ListMethods => {
            let width = Method::all_names().iter().map(|(n, _)| n.len()).max().unwrap_or(0);
            for (name, about) in Method::all_names() {
                println!("{name:<width$}  {about}");
            }
            Ok(Outcome::Success)
        }
    }
}

fn parse_kb(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::config("kb", format!("'{s}' is not of the form KxB"));
    let (k, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((k.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn settings_label(settings: &[(String, serde_json::Value)]) -> String {
    settings
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct SweepCsvRow {
    point: usize,
    settings: String,
    trials: usize,
    aborted_trials: usize,
    final_loss_mean: f64,
    final_loss_std: f64,
    min_grad_norm2_mean: f64,
    min_grad_norm2_std: f64,
    best: bool,
}

fn write_sweep(dir: &Path, result: &harness::SweepResult, overrides: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<SweepCsvRow> = result
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| SweepCsvRow {
            point: i,
            settings: settings_label(&p.settings),
            trials: p.trials,
            aborted_trials: p.aborted_trials,
            final_loss_mean: p.final_loss_mean,
            final_loss_std: p.final_loss_std,
            min_grad_norm2_mean: p.min_grad_norm2_mean,
            min_grad_norm2_std: p.min_grad_norm2_std,
            best: result.best == Some(i),
        })
        .collect();
    harness::write_csv(&dir.join("sweep.csv"), &rows)?;
    harness::write_json(
        &dir.join("sweep.json"),
        &serde_json::json!({"overrides": overrides, "result": result}),
    )
}

fn print_run_summary(result: &harness::RunResult, out: &Path) {
    let cfg = &result.config;
    println!(
        "{} on {} (d={}, N={}), K={} B={}, T={}, {} trial(s)",
        cfg.method.name(),
        objective_label(&cfg.objective.kind),
        cfg.objective.dimension,
        cfg.objective.sample_count,
        cfg.cluster.workers_k,
        cfg.cluster.local_batch_b,
        cfg.total_steps_t,
        cfg.trials
    );
    for t in &result.trials {
        match &t.aborted {
            Some(msg) => println!("trial {} seed {}: aborted after {} steps ({msg})", t.trial, t.seed, t.steps_completed()),
            None => println!(
                "trial {} seed {}: loss {:.6e} -> {:.6e}",
                t.trial, t.seed, t.initial_loss, t.final_loss
            ),
        }
        if let Some(th) = &t.theory {
            println!(
                "  descent identity max residual {:.3e}; virtual distance {:?}; worker deviation {:?}; rate bound {} ({})",
                th.descent_identity.max_residual,
                th.proximity.virtual_distance.verdict,
                th.proximity.worker_deviation.verdict,
                if th.rate_bound.holds { "holds" } else { "violated" },
                if th.rate_bound.asserted { "asserted" } else { "not asserted" },
            );
        }
    }
    println!("results written to {}", out.display());
}

fn objective_label(kind: &crate::objectives::ObjectiveKind) -> &'static str {
    use crate::objectives::ObjectiveKind;
    match kind {
        ObjectiveKind::Quadratic { .. } => "Quadratic",
        ObjectiveKind::Logistic { .. } => "Logistic",
        ObjectiveKind::TinyMlp { .. } => "TinyMLP",
    }
}
