//! Seeded experiment runner: config, trials, sweeps, speedup studies and
//! result files.

mod config;
mod output;
mod run;
mod study;

pub use config::{apply_overrides, parse_override, set_path, RunConfig};
pub use output::{aggregate_records, read_jsonl, write_csv, write_json, write_jsonl, write_run, AggregateRow};
pub use run::{
    run, run_constants, run_trial, DescentSummary, MetricsRecord, RunResult, TrialResult,
    TrialTheory, WallEvents, DESCENT_TOLERANCE,
};
pub use study::{
    grid_config, speedup_study, steps_to_epsilon, summarize_point, sweep, GridAxis, SpeedupResult,
    SpeedupRow, SweepPoint, SweepResult,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Mean and sample standard deviation; std is 0 for fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::NAN });
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
