use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::theory;

use super::config::{set_path, RunConfig};
use super::mean_std;
use super::run::{run, RunResult};

/// One swept hyperparameter: a dotted path into the config and its values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis {
    pub path: String,
    pub values: Vec<Value>,
}

impl GridAxis {
    /// Parses `path=v1,v2,...`; each value is read as JSON, falling back to a string.
    pub fn parse(raw: &str) -> Result<Self> {
        let (path, vals) = raw
            .split_once('=')
            .ok_or_else(|| Error::config(raw, "grid axis must look like PATH=V1,V2,..."))?;
        let values: Vec<Value> = vals
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
            .collect();
        if values.is_empty() {
            return Err(Error::config(path, "grid axis has no values"));
        }
        Ok(Self {
            path: path.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Position along each axis.
    pub coords: Vec<usize>,
    pub settings: Vec<(String, Value)>,
    pub trials: usize,
    pub aborted_trials: usize,
    /// Aborted trials count as `+inf`.
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    pub min_grad_norm2_mean: f64,
    pub min_grad_norm2_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axes: Vec<GridAxis>,
    pub points: Vec<SweepPoint>,
    /// Index into `points` of the lowest mean final loss.
    pub best: Option<usize>,
    /// True when the best point is the first or last value of an axis with
    /// more than one value.
    pub best_on_boundary: bool,
    pub boundary_axes: Vec<String>,
}

fn grid_coords(axes: &[GridAxis]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..axis.values.len()).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    out
}

/// Builds the config for one grid point and validates it.
pub fn grid_config(base: &RunConfig, axes: &[GridAxis], coords: &[usize]) -> Result<RunConfig> {
    let mut value = serde_json::to_value(base)?;
    for (axis, &i) in axes.iter().zip(coords) {
        set_path(&mut value, &axis.path, axis.values[i].clone())?;
    }
    let cfg = RunConfig::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn summarize_point(coords: Vec<usize>, axes: &[GridAxis], result: &RunResult) -> SweepPoint {
    let finals: Vec<f64> = result
        .trials
        .iter()
        .map(|t| if t.aborted.is_some() { f64::INFINITY } else { t.final_loss })
        .collect();
    let mins: Vec<f64> = result
        .trials
        .iter()
        .map(|t| t.grad_norm2.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let (final_loss_mean, final_loss_std) = mean_std(&finals);
    let (min_grad_norm2_mean, min_grad_norm2_std) = mean_std(&mins);
    SweepPoint {
        settings: axes
            .iter()
            .zip(&coords)
            .map(|(a, &i)| (a.path.clone(), a.values[i].clone()))
            .collect(),
        coords,
        trials: result.trials.len(),
        aborted_trials: result.trials.iter().filter(|t| t.aborted.is_some()).count(),
        final_loss_mean,
        final_loss_std,
        min_grad_norm2_mean,
        min_grad_norm2_std,
    }
}

/// Runs every point of the cartesian grid (first axis slowest). All grid
/// configs are validated before any run starts.
pub fn sweep(base: &RunConfig, axes: &[GridAxis], parallelism: Parallelism) -> Result<SweepResult> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::config("grid", "must contain at least one value per axis"));
    }
    let coords = grid_coords(axes);
    let configs = coords
        .iter()
        .map(|c| grid_config(base, axes, c))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(configs.len());
    for (c, cfg) in coords.into_iter().zip(&configs) {
        let result = run(cfg, parallelism)?;
        points.push(summarize_point(c, axes, &result));
    }
    let best = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.final_loss_mean.is_nan())
        .min_by(|a, b| a.1.final_loss_mean.total_cmp(&b.1.final_loss_mean))
        .map(|(i, _)| i);
    let boundary_axes: Vec<String> = match best {
        Some(i) => axes
            .iter()
            .zip(&points[i].coords)
            .filter(|(a, &c)| a.values.len() > 1 && (c == 0 || c + 1 == a.values.len()))
            .map(|(a, _)| a.path.clone())
            .collect(),
        None => Vec::new(),
    };
    Ok(SweepResult {
        axes: axes.to_vec(),
        points,
        best,
        best_on_boundary: !boundary_axes.is_empty(),
        boundary_axes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub workers_k: usize,
    pub local_batch_b: usize,
    pub global_batch: usize,
    pub lr_gamma: f64,
    /// First `t` whose trial-mean `grad_norm2` is at most ε; `None` when censored.
    pub steps_to_epsilon: Option<usize>,
    pub censored: bool,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupResult {
    pub epsilon: f64,
    pub horizon_t: usize,
    /// Order estimate with unit constants at horizon `horizon_t`.
    pub critical_kb: f64,
    pub rows: Vec<SpeedupRow>,
}

/// First index where the trial-mean of `grad_norm2` is ≤ ε. Trials that
/// stopped early count as `+inf` from their last step on.
pub fn steps_to_epsilon(result: &RunResult, epsilon: f64) -> Option<usize> {
    let t_total = result.config.total_steps_t;
    let n = result.trials.len() as f64;
    (0..t_total).find(|&t| {
        let mean = result
            .trials
            .iter()
            .map(|tr| tr.grad_norm2.get(t).copied().unwrap_or(f64::INFINITY))
            .sum::<f64>()
            / n;
        mean <= epsilon
    })
}

/// Steps-to-ε for each `(K, B)`. With `lr_grid`, γ is the grid value reaching
/// ε soonest (ties go to the smaller γ); otherwise `theory::tune_stepsize`.
pub fn speedup_study(
    base: &RunConfig,
    kb_grid: &[(usize, usize)],
    epsilon: f64,
    lr_grid: Option<&[f64]>,
    parallelism: Parallelism,
) -> Result<SpeedupResult> {
    if kb_grid.is_empty() {
        return Err(Error::config("kb_grid", "must not be empty"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::config("epsilon", "must be finite and > 0"));
    }
    if lr_grid.is_some_and(|g| g.is_empty()) {
        return Err(Error::config("lr_grid", "must not be empty"));
    }
    base.validate()?;
    let obj = base.objective.build().map_err(|e| e.within("objective"))?;
    let tc = super::run::run_constants(base, &obj)?.with_horizon(base.total_steps_t, epsilon);
    let hp = base.effective_hyperparams();
    let critical_kb = theory::critical_batch_size(&base.method, &tc, &hp);

    let point_cfg = |k: usize, b: usize, lr: f64| -> Result<RunConfig> {
        let mut cfg = base.clone();
        cfg.cluster.workers_k = k;
        cfg.cluster.local_batch_b = b;
        cfg.hyperparams.lr_gamma = lr;
        cfg.schedule = None;
        cfg.record_virtual_sequence = false;
        cfg.validate()?;
        Ok(cfg)
    };

    for &(k, b) in kb_grid {
        point_cfg(k, b, base.hyperparams.lr_gamma)?;
    }

    let mut rows = Vec::with_capacity(kb_grid.len());
    for &(k, b) in kb_grid {
        let candidates: Vec<f64> = match lr_grid {
            Some(g) => g.to_vec(),
            None => {
                let mut c = base.cluster.clone();
                c.workers_k = k;
                c.local_batch_b = b;
                vec![theory::tune_stepsize(&base.method, &tc, &hp, &c, base.total_steps_t)]
            }
        };
        let mut best: Option<(f64, Option<usize>)> = None;
        for lr in candidates {
            let cfg = point_cfg(k, b, lr)?;
            let steps = steps_to_epsilon(&run(&cfg, parallelism)?, epsilon);
            let better = match (&best, steps) {
                (None, _) => true,
                (Some((_, None)), Some(_)) => true,
                (Some((_, Some(s0))), Some(s)) => s < *s0,
                _ => false,
            };
            if better {
                best = Some((lr, steps));
            }
        }
        let (lr_gamma, steps) = best.expect("at least one candidate");
        rows.push(SpeedupRow {
            workers_k: k,
            local_batch_b: b,
            global_batch: k * b,
            lr_gamma,
            steps_to_epsilon: steps,
            censored: steps.is_none(),
            trials: base.trials,
        });
    }
    Ok(SpeedupResult {
        epsilon,
        horizon_t: base.total_steps_t,
        critical_kb,
        rows,
    })
}
