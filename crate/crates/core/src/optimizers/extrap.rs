//! Mini-batch SGD, Nesterov momentum and the extrapolated family, all
//! expressed through one momentum recurrence so the degenerate settings
//! reproduce each other bit for bit.

use super::noise::sample_directions;
use super::{
    apply_lars, ensure_finite, mean_deviation, worker_gradients, HyperParams, Method, NoiseSpec,
    OptimizerState, StepTrace,
};
use crate::cluster::{reduce_mean, Cluster, SampleBatch};
use crate::error::Result;
use crate::objectives::Objective;
use crate::params::ParamVector;

/// Lookahead points of one synchronous step.
pub(crate) struct Plan {
    pub points: Vec<ParamVector>,
    pub directions: Option<Vec<ParamVector>>,
    pub momentum: bool,
}

impl Plan {
    pub fn x_half_mean(&self) -> Result<ParamVector> {
        reduce_mean(&self.points)
    }

    pub fn xi_mean(&self, like: &ParamVector) -> Result<ParamVector> {
        match &self.directions {
            Some(d) => reduce_mean(d),
            None => Ok(like.zeros_like()),
        }
    }
}

/// `x − γ̂ζ + u·v`, skipping each term that is switched off so that the
/// result is a plain copy of `x` when both are.
pub(crate) fn lookahead_point(
    x: &ParamVector,
    v: &ParamVector,
    u: f64,
    gamma_hat: f64,
    direction: Option<&ParamVector>,
) -> ParamVector {
    let mut p = x.clone();
    if let Some(z) = direction {
        p.axpy(-gamma_hat, z);
    }
    if u != 0.0 {
        p.axpy(u, v);
    }
    p
}

fn noise_directions(
    noise: &NoiseSpec,
    state: &OptimizerState,
    cluster: &Cluster,
) -> Result<Vec<ParamVector>> {
    let anchors = vec![&state.x; cluster.k()];
    sample_directions(noise, cluster.cfg.master_seed, state.step_t, &anchors, &state.past_grad)
}

pub(crate) fn plan(
    method: &Method,
    state: &OptimizerState,
    cluster: &Cluster,
    hp: &HyperParams,
    lr: f64,
) -> Result<Plan> {
    let k = cluster.k();
    let gamma_hat = hp.gamma_hat(lr, k);
    let extrapolate = state.step_t > 0 && gamma_hat != 0.0;
    let (momentum, directions) = match method {
        Method::Sgd => (false, None),
        Method::Nesterov => (true, None),
        Method::ExtrapSgd | Method::PostLocal(_) => {
            (true, extrapolate.then(|| state.past_grad.clone()))
        }
        Method::ExtrapNoise(noise) => (
            true,
            if extrapolate {
                Some(noise_directions(noise, state, cluster)?)
            } else {
                None
            },
        ),
        Method::ExtrapAdam { .. } | Method::Adam => unreachable!("Adam variants plan separately"),
    };
    let u = if momentum { hp.momentum_u } else { 0.0 };
    let points = (0..k)
        .map(|w| {
            let dir = directions.as_ref().map(|d| &d[w]);
            lookahead_point(&state.x, &state.v, u, gamma_hat, dir)
        })
        .collect();
    Ok(Plan {
        points,
        directions,
        momentum,
    })
}

/// Evaluates gradients at the planned points and applies
/// `v ← u·v − γ·ḡ; x ← x + v` (or `x ← x − γ·ḡ` without momentum).
pub(crate) fn execute(
    plan: Plan,
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    let t = state.step_t;
    let wg = worker_gradients(obj, cluster, &plan.points, batches, hp)?;
    let mut g = reduce_mean(&wg.grads)?;
    if hp.lars_trust > 0.0 {
        apply_lars(&mut g, &state.x, hp.lars_trust, hp.weight_decay);
    }
    ensure_finite(&g, t, "reduced gradient")?;

    let mut x = state.x.clone();
    if plan.momentum {
        let u = hp.momentum_u;
        let mut v = if u != 0.0 {
            let mut v = state.v.clone();
            v.scale(u);
            v
        } else {
            state.v.zeros_like()
        };
        if u != 0.0 {
            v.axpy(-lr, &g);
        } else {
            v.values_mut()
                .iter_mut()
                .zip(g.values())
                .for_each(|(vi, gi)| *vi = -lr * gi);
        }
        x.axpy(1.0, &v);
        ensure_finite(&v, t, "momentum buffer")?;
        state.v = v;
    } else {
        x.axpy(-lr, &g);
    }
    ensure_finite(&x, t, "iterate")?;

    let x_half_mean = plan.x_half_mean()?;
    let xi_mean = plan.xi_mean(&state.x)?;
    let worker_deviation = mean_deviation(&plan.points, &x_half_mean);
    state.x = x;
    state.past_grad = wg.past;
    state.step_t += 1;
    Ok(StepTrace {
        step: t,
        x_half_mean,
        g_mean: g,
        xi_mean,
        worker_deviation,
        averaged: false,
        dispersion: None,
        gradient_evaluations: wg.evaluations,
    })
}

fn run(
    method: &Method,
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    let p = plan(method, state, cluster, hp, lr)?;
    execute(p, state, obj, cluster, batches, hp, lr)
}

/// `x ← x − γ·ḡ(x)`. The momentum factor is ignored.
pub fn step_minibatch_sgd(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    run(&Method::Sgd, state, obj, cluster, batches, hp, lr)
}

/// `x_{t+1/2} = x_t + u·v_t; v_{t+1} = u·v_t − γ·ḡ(x_{t+1/2}); x_{t+1} = x_t + v_{t+1}`.
pub fn step_nesterov(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    run(&Method::Nesterov, state, obj, cluster, batches, hp, lr)
}

/// Nesterov step whose per-worker lookahead is first displaced by
/// `−γ̂·past_grad[k]`. The displacement is skipped at `t = 0`.
pub fn step_extrap_sgd(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    run(&Method::ExtrapSgd, state, obj, cluster, batches, hp, lr)
}

/// As [`step_extrap_sgd`] with the displacement `−γ̂·ζ^k_t`. Random draws
/// come from streams keyed by `(cluster seed, k, t)`.
pub fn step_extrapolated_noise(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
    noise: &NoiseSpec,
) -> Result<StepTrace> {
    noise.validate()?;
    run(&Method::ExtrapNoise(noise.clone()), state, obj, cluster, batches, hp, lr)
}
