//! Result files.
//!
//! ```text
//! <out>/manifest.json        resolved config, overrides, per-trial seeds, version
//! <out>/trial_<i>.jsonl      one MetricsRecord per line
//! <out>/aggregate.csv        step,lr,trials,train_loss_mean,train_loss_std,grad_norm2_mean,grad_norm2_std
//! <out>/theory_report.json   per-trial theory checks and pass counts
//! ```
//!
//! `aggregate.csv` is recomputable from the trial files with
//! [`aggregate_records`]; std is the sample standard deviation (0 for one
//! trial). Aborted records are excluded.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::objectives::TheoryConstants;
use crate::theory::Verdict;

use super::run::{MetricsRecord, RunResult, TrialTheory};
use super::{mean_std, VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub step: usize,
    pub lr: f64,
    pub trials: usize,
    pub train_loss_mean: f64,
    pub train_loss_std: f64,
    pub grad_norm2_mean: f64,
    pub grad_norm2_std: f64,
}

/// Per-step mean and std across trials, in step order.
pub fn aggregate_records(trials: &[Vec<MetricsRecord>]) -> Vec<AggregateRow> {
    let mut by_step: BTreeMap<usize, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for records in trials {
        for r in records.iter().filter(|r| r.aborted.is_none()) {
            let e = by_step.entry(r.step).or_insert((r.lr, Vec::new(), Vec::new()));
            e.1.push(r.train_loss);
            e.2.push(r.grad_norm2);
        }
    }
    by_step
        .into_iter()
        .map(|(step, (lr, loss, g))| {
            let (lm, ls) = mean_std(&loss);
            let (gm, gs) = mean_std(&g);
            AggregateRow {
                step,
                lr,
                trials: loss.len(),
                train_loss_mean: lm,
                train_loss_std: ls,
                grad_norm2_mean: gm,
                grad_norm2_std: gs,
            }
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct TrialTheoryEntry<'a> {
    trial: usize,
    seed: u64,
    #[serde(flatten)]
    theory: &'a TrialTheory,
}

#[derive(Debug, Clone, Default, Serialize)]
struct PassCounts {
    trials: usize,
    descent_identity: usize,
    virtual_distance: usize,
    worker_deviation: usize,
    rate_bound: usize,
    rate_bound_asserted: usize,
}

#[derive(Debug, Clone, Serialize)]
struct TheoryReportFile<'a> {
    method: &'a str,
    grad_point: &'static str,
    constants: &'a TheoryConstants,
    enabled: bool,
    passes: PassCounts,
    trials: Vec<TrialTheoryEntry<'a>>,
}

/// Writes the four result files into `dir`, creating it if needed.
pub fn write_run(dir: &Path, result: &RunResult, overrides: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &result.config;
    let manifest = json!({
        "software": {"name": env!("CARGO_PKG_NAME"), "version": VERSION},
        "config": cfg,
        "overrides": overrides,
        "seeds": result.trials.iter().map(|t| json!({"trial": t.trial, "seed": t.seed})).collect::<Vec<_>>(),
        "constants": result.constants,
        "grad_point": cfg.method.grad_point().name(),
        "aborted_trials": result.trials.iter().filter(|t| t.aborted.is_some()).map(|t| t.trial).collect::<Vec<_>>(),
    });
    write_json(&dir.join("manifest.json"), &manifest)?;

    for t in &result.trials {
        write_jsonl(&dir.join(format!("trial_{}.jsonl", t.trial)), &t.records)?;
    }

    let records: Vec<Vec<MetricsRecord>> = result.trials.iter().map(|t| t.records.clone()).collect();
    write_csv(&dir.join("aggregate.csv"), &aggregate_records(&records))?;

    let mut passes = PassCounts::default();
    let mut entries = Vec::new();
    for t in &result.trials {
        if let Some(th) = &t.theory {
            passes.trials += 1;
            passes.descent_identity += th.descent_identity.holds as usize;
            passes.virtual_distance += (th.proximity.virtual_distance.verdict == Verdict::Holds) as usize;
            passes.worker_deviation += (th.proximity.worker_deviation.verdict == Verdict::Holds) as usize;
            passes.rate_bound += th.rate_bound.holds as usize;
            passes.rate_bound_asserted += th.rate_bound.asserted as usize;
            entries.push(TrialTheoryEntry {
                trial: t.trial,
                seed: t.seed,
                theory: th,
            });
        }
    }
    let report = TheoryReportFile {
        method: cfg.method.name(),
        grad_point: cfg.method.grad_point().name(),
        constants: &result.constants,
        enabled: cfg.record_virtual_sequence,
        passes,
        trials: entries,
    };
    write_json(&dir.join("theory_report.json"), &report)
}
