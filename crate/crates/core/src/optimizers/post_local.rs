use serde::{Deserialize, Serialize};

use super::extrap::{execute, lookahead_point, plan};
use super::{
    apply_lars, ensure_finite, mean_deviation, worker_gradients, HyperParams, Method,
    OptimizerState, StepTrace,
};
use crate::cluster::{reduce_mean, Cluster, SampleBatch};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::params::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostLocalConfig {
    /// Last synchronous step. `usize::MAX` never switches.
    pub transition_step_t0: usize,
    pub local_steps_h: usize,
    /// Zero every local momentum buffer at the switch instead of copying the global one.
    #[serde(default)]
    pub reset_local_momentum: bool,
}

impl PostLocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_steps_h == 0 {
            return Err(Error::config("local_steps_h", "must be at least 1"));
        }
        Ok(())
    }
}

/// Synchronous extrap-SGD for `t ≤ t0`; afterwards each worker runs extrap-SGD
/// on its own `(x^k, v^k)` and the models are averaged whenever `t mod H = 0`.
/// Between averaging steps `state.x` holds the worker mean.
pub fn step_post_local(
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
    plc: &PostLocalConfig,
) -> Result<StepTrace> {
    plc.validate()?;
    let t = state.step_t;
    if t <= plc.transition_step_t0 {
        let p = plan(&Method::PostLocal(plc.clone()), state, cluster, hp, lr)?;
        return execute(p, state, obj, cluster, batches, hp, lr);
    }
    let k = cluster.k();
    if !state.in_local_phase() {
        state.local_x = vec![state.x.clone(); k];
        state.local_v = if plc.reset_local_momentum {
            vec![state.v.zeros_like(); k]
        } else {
            vec![state.v.clone(); k]
        };
    }

    let gamma_hat = hp.gamma_hat(lr, k);
    let extrapolate = gamma_hat != 0.0;
    let u = hp.momentum_u;
    let points: Vec<ParamVector> = (0..k)
        .map(|w| {
            let dir = extrapolate.then(|| &state.past_grad[w]);
            lookahead_point(&state.local_x[w], &state.local_v[w], u, gamma_hat, dir)
        })
        .collect();
    let wg = worker_gradients(obj, cluster, &points, batches, hp)?;

    let mut new_x = Vec::with_capacity(k);
    let mut new_v = Vec::with_capacity(k);
    let mut applied = Vec::with_capacity(k);
    for w in 0..k {
        let mut g = wg.grads[w].clone();
        if hp.lars_trust > 0.0 {
            apply_lars(&mut g, &state.local_x[w], hp.lars_trust, hp.weight_decay);
        }
        ensure_finite(&g, t, "local gradient")?;
        let mut v = state.local_v[w].clone();
        v.scale(u);
        v.axpy(-lr, &g);
        let mut x = state.local_x[w].clone();
        x.axpy(1.0, &v);
        ensure_finite(&x, t, "local iterate")?;
        new_x.push(x);
        new_v.push(v);
        applied.push(g);
    }

    let averaged = t.is_multiple_of(plc.local_steps_h);
    let mean = reduce_mean(&new_x)?;
    let dispersion = if averaged {
        for x in new_x.iter_mut() {
            *x = mean.clone();
        }
        0.0
    } else {
        new_x
            .iter()
            .map(|x| x.dist2(&mean).sqrt())
            .fold(0.0, f64::max)
    };

    let x_half_mean = reduce_mean(&points)?;
    let xi_mean = if extrapolate {
        reduce_mean(&state.past_grad)?
    } else {
        state.x.zeros_like()
    };
    let worker_deviation = mean_deviation(&points, &x_half_mean);
    let g_mean = reduce_mean(&applied)?;
    state.x = mean;
    state.v = reduce_mean(&new_v)?;
    state.local_x = new_x;
    state.local_v = new_v;
    state.past_grad = wg.past;
    state.step_t += 1;
    Ok(StepTrace {
        step: t,
        x_half_mean,
        g_mean,
        xi_mean,
        worker_deviation,
        averaged,
        dispersion: Some(dispersion),
        gradient_evaluations: wg.evaluations,
    })
}
