use super::{
    apply_lars, ensure_finite, mean_deviation, worker_gradients, HyperParams, OptimizerState,
    StepTrace,
};
use crate::cluster::{reduce_mean, Cluster, SampleBatch};
use crate::error::Result;
use crate::objectives::Objective;
use crate::params::ParamVector;

/// Adam-preconditioned past gradient of one worker:
/// `(β1·m + (1−β1)·g) / (β2·v + (1−β2)·g² + ε)`, or with `√(β2·v + (1−β2)·g²) + ε`
/// in the denominator when `sqrt` is set.
fn extrap_direction(state: &OptimizerState, past: &ParamVector, hp: &HyperParams, sqrt: bool) -> ParamVector {
    let (b1, b2, eps) = (hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
    let values = state
        .adam_m
        .values()
        .iter()
        .zip(state.adam_v.values())
        .zip(past.values())
        .map(|((m, v), g)| {
            let num = b1 * m + (1.0 - b1) * g;
            let second = b2 * v + (1.0 - b2) * g * g;
            let den = if sqrt { second.sqrt() + eps } else { second + eps };
            num / den
        })
        .collect();
    past.like(values)
}

fn adam_family(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
    extrapolate: Option<bool>,
) -> Result<StepTrace> {
    let t = state.step_t;
    let k = cluster.k();
    let gamma_hat = hp.gamma_hat(lr, k);
    let directions: Option<Vec<ParamVector>> = match extrapolate {
        Some(sqrt) if t > 0 && gamma_hat != 0.0 => Some(
            state
                .past_grad
                .iter()
                .map(|g| extrap_direction(state, g, hp, sqrt))
                .collect(),
        ),
        _ => None,
    };
    let points: Vec<ParamVector> = (0..k)
        .map(|w| {
            let mut p = state.x.clone();
            if let Some(d) = &directions {
                p.axpy(-gamma_hat, &d[w]);
            }
            p
        })
        .collect();

    let wg = worker_gradients(obj, cluster, &points, batches, hp)?;
    let mut g = reduce_mean(&wg.grads)?;
    if hp.lars_trust > 0.0 {
        apply_lars(&mut g, &state.x, hp.lars_trust, hp.weight_decay);
    }
    ensure_finite(&g, t, "reduced gradient")?;

    let (b1, b2, eps) = (hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
    let mut m = state.adam_m.clone();
    let mut v = state.adam_v.clone();
    let mut x = state.x.clone();
    for (((mi, vi), xi), gi) in m
        .values_mut()
        .iter_mut()
        .zip(v.values_mut().iter_mut())
        .zip(x.values_mut().iter_mut())
        .zip(g.values())
    {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        *xi -= lr * *mi / (vi.sqrt() + eps);
    }
    ensure_finite(&x, t, "iterate")?;

    let x_half_mean = reduce_mean(&points)?;
    let xi_mean = match &directions {
        Some(d) => reduce_mean(d)?,
        None => state.x.zeros_like(),
    };
    let worker_deviation = mean_deviation(&points, &x_half_mean);
    state.adam_m = m;
    state.adam_v = v;
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

/// extrap-Adam. Each worker evaluates its gradient at
/// `x_t − γ̂·(β1·m + (1−β1)·g_past) / (β2·v + (1−β2)·g_past² + ε)`; the
/// moments then absorb the reduced gradient and
/// `x ← x − γ·m/(√v + ε)`. No bias correction. The extrapolation is skipped
/// at `t = 0`.
pub fn step_extrap_adam(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
    extrap_denominator_sqrt: bool,
) -> Result<StepTrace> {
    adam_family(state, obj, cluster, batches, hp, lr, Some(extrap_denominator_sqrt))
}

/// Adam without bias correction, gradients at `x_t`.
pub fn step_adam(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    adam_family(state, obj, cluster, batches, hp, lr, None)
}
