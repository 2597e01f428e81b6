use serde::{Deserialize, Deserializer, Serialize};

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::objectives::{Objective, TheoryConstants};
use crate::optimizers::{self, GradPoint, Method, OptimizerState};
use crate::par::Parallelism;
use crate::seed;
use crate::theory::{
    self, build_virtual_sequence, check_descent_identity, ProximityReport, RateBoundReport,
    Trajectory, VirtualSequence,
};

use super::config::RunConfig;

/// Relative residual below which the descent identity counts as exact.
pub const DESCENT_TOLERANCE: f64 = 1e-8;

/// Cumulative work counters up to and including the recorded step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallEvents {
    /// Per-sample gradient evaluations made by the optimizer.
    pub gradient_evaluations: u64,
    pub averaging_events: u64,
    /// Full gradients spent on smoothness probes.
    pub probe_gradients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Index `t` of the update this record describes.
    pub step: usize,
    pub lr: f64,
    /// `f(x_{t+1})`.
    #[serde(deserialize_with = "nullable_f64")]
    pub train_loss: f64,
    /// `‖∇f‖²` at the point named by `grad_point`.
    #[serde(deserialize_with = "nullable_f64")]
    pub grad_norm2: f64,
    pub grad_point: String,
    /// `‖∇f(x_t)‖²`.
    #[serde(deserialize_with = "nullable_f64")]
    pub grad_norm2_iterate: f64,
    #[serde(rename = "smoothness_L", default, skip_serializing_if = "Option::is_none")]
    pub smoothness_l: Option<f64>,
    /// `max_k ‖x^k − x̄‖` in the local phase of post-local SGD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_dispersion: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub averaged: bool,
    pub wall_events: WallEvents,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// serde_json writes non-finite floats as `null`; read them back as NaN.
fn nullable_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentSummary {
    pub steps: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTheory {
    pub descent_identity: DescentSummary,
    pub proximity: ProximityReport,
    pub rate_bound: RateBoundReport,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    /// `grad_norm2` for every step, regardless of the record cadence.
    pub grad_norm2: Vec<f64>,
    /// Every smoothness estimate taken.
    pub smoothness: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_state: OptimizerState,
    pub aborted: Option<String>,
    pub virtual_sequence: Option<VirtualSequence>,
    pub descent_residuals: Vec<f64>,
    pub theory: Option<TrialTheory>,
}

impl TrialResult {
    pub fn steps_completed(&self) -> usize {
        self.grad_norm2.len()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub constants: TheoryConstants,
    pub trials: Vec<TrialResult>,
}

impl RunResult {
    pub fn any_aborted(&self) -> bool {
        self.trials.iter().any(|t| t.aborted.is_some())
    }
}

/// Constants at the initial point with the horizon set to `total_steps_T`.
pub fn run_constants(cfg: &RunConfig, obj: &Objective) -> Result<TheoryConstants> {
    Ok(obj
        .estimate_constants(&obj.initial_point(), cfg.probe_budget)?
        .with_horizon(cfg.total_steps_t, 0.0))
}

/// Validates `cfg`, then runs every trial. Trials may run concurrently;
/// each is deterministic in `(master_seed, trial index)`.
pub fn run(cfg: &RunConfig, parallelism: Parallelism) -> Result<RunResult> {
    cfg.validate()?;
    let obj = cfg.objective.build().map_err(|e| e.within("objective"))?;
    let constants = run_constants(cfg, &obj)?;
    let trials = parallelism.try_map_range(cfg.trials, |i| {
        run_trial(cfg, &obj, &constants, i, parallelism)
    })?;
    Ok(RunResult {
        config: cfg.clone(),
        constants,
        trials,
    })
}

/// One trial. A non-finite value ends the trial early with an abort record;
/// everything recorded up to that point is kept.
pub fn run_trial(
    cfg: &RunConfig,
    obj: &Objective,
    constants: &TheoryConstants,
    trial: usize,
    parallelism: Parallelism,
) -> Result<TrialResult> {
    let seed = seed::trial_seed(cfg.master_seed, trial);
    let mut cluster_cfg = cfg.cluster.clone();
    cluster_cfg.master_seed = seed;
    let cluster = Cluster::new(cluster_cfg, obj.sample_count(), parallelism)?;
    let x0 = obj.initial_point();
    let initial_loss = obj.loss(&x0)?;
    let mut state = OptimizerState::new(x0.clone(), cluster.k());
    let mut traj = cfg.record_virtual_sequence.then(|| Trajectory::new(x0));
    let grad_point = cfg.method.grad_point();
    let t_total = cfg.total_steps_t;

    let mut records = Vec::new();
    let mut grad_norm2 = Vec::with_capacity(t_total);
    let mut smoothness = Vec::new();
    let mut events = WallEvents::default();
    let mut aborted = None;
    let mut final_loss = initial_loss;

    for t in 0..t_total {
        let lr = cfg.lr_at(t);
        let x_prev = state.x.clone();
        let batches = cluster.draw_batches(t);
        let trace = match optimizers::step(&cfg.method, &mut state, obj, &cluster, &batches, &cfg.hyperparams, lr) {
            Ok(tr) => tr,
            Err(e @ Error::NonFinite { .. }) => {
                aborted = Some(e.to_string());
                records.push(abort_record(t, lr, grad_point, events, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        events.gradient_evaluations += trace.gradient_evaluations as u64;
        events.averaging_events += trace.averaged as u64;

        let g_iter = obj.full_gradient(&x_prev)?.norm2();
        let g_designated = match grad_point {
            GradPoint::Iterate => g_iter,
            _ => obj.full_gradient(&trace.x_half_mean)?.norm2(),
        };
        let loss = obj.loss(&state.x)?;
        if !(loss.is_finite() && g_designated.is_finite() && g_iter.is_finite()) {
            let msg = format!("non-finite loss or gradient norm at step {t}");
            aborted = Some(msg.clone());
            records.push(abort_record(t, lr, grad_point, events, msg));
            break;
        }
        grad_norm2.push(g_designated);
        final_loss = loss;
        if let Some(tr) = traj.as_mut() {
            tr.push(&trace);
        }

        let probe_now = cfg.record_smoothness_every > 0 && t % cfg.record_smoothness_every == 0;
        let smoothness_l = if probe_now {
            let dir = state.x.sub(&x_prev);
            match theory::smoothness_estimate(obj, &x_prev, &dir) {
                Ok(l) => {
                    events.probe_gradients += theory::DEFAULT_PROBES as u64 + 1;
                    smoothness.push(l);
                    Some(l)
                }
                Err(Error::ZeroDirection) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        if t % cfg.record_every == 0 || t + 1 == t_total || probe_now {
            records.push(MetricsRecord {
                step: t,
                lr,
                train_loss: loss,
                grad_norm2: g_designated,
                grad_point: grad_point.name().to_string(),
                grad_norm2_iterate: g_iter,
                smoothness_l,
                worker_dispersion: trace.dispersion,
                averaged: trace.averaged,
                wall_events: events,
                aborted: None,
            });
        }
    }

    let mut virtual_sequence = None;
    let mut descent_residuals = Vec::new();
    let mut theory_report = None;
    if let (Some(mut tr), None) = (traj, &aborted) {
        let hp = cfg.effective_hyperparams();
        let (x_half, xi) = optimizers::lookahead(&cfg.method, &state, &cluster, &hp, cfg.lr_at(t_total))?;
        tr.close(x_half, xi);
        let vs = build_virtual_sequence(&tr, &hp, &cfg.method, cluster.k())?;
        descent_residuals = check_descent_identity(&vs);
        let sigma_hat2 = match &cfg.method {
            Method::ExtrapNoise(n) => n.sigma_hat2(obj.dim()),
            _ => None,
        };
        let max_residual = descent_residuals.iter().cloned().fold(0.0, f64::max);
        let mean_residual = descent_residuals.iter().sum::<f64>() / descent_residuals.len() as f64;
        theory_report = Some(TrialTheory {
            descent_identity: DescentSummary {
                steps: descent_residuals.len(),
                max_residual,
                mean_residual,
                tolerance: DESCENT_TOLERANCE,
                holds: max_residual <= DESCENT_TOLERANCE,
            },
            proximity: theory::check_proximity_inequalities(
                &tr,
                &vs,
                &cfg.method,
                &cluster.cfg,
                constants.variance_sigma2,
                sigma_hat2,
            ),
            rate_bound: theory::rate_bound_report(
                &cfg.method,
                constants,
                &hp,
                &cluster.cfg,
                &grad_norm2,
                sigma_hat2,
            ),
        });
        virtual_sequence = Some(vs);
    }

    Ok(TrialResult {
        trial,
        seed,
        records,
        grad_norm2,
        smoothness,
        initial_loss,
        final_loss,
        final_state: state,
        aborted,
        virtual_sequence,
        descent_residuals,
        theory: theory_report,
    })
}

fn abort_record(t: usize, lr: f64, gp: GradPoint, events: WallEvents, msg: String) -> MetricsRecord {
    MetricsRecord {
        step: t,
        lr,
        train_loss: f64::NAN,
        grad_norm2: f64::NAN,
        grad_point: gp.name().to_string(),
        grad_norm2_iterate: f64::NAN,
        smoothness_l: None,
        worker_dispersion: None,
        averaged: false,
        wall_events: events,
        aborted: Some(msg),
    }
}
