use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizers::{HyperParams, Method, StepTrace};
use crate::params::ParamVector;

/// Averaged quantities of one run, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x0: ParamVector,
    /// `x̄_{t+1/2}` for `t = 0..T`; the last entry is the lookahead of the
    /// step that was never taken.
    pub x_half: Vec<ParamVector>,
    /// `ḡ_{t+1/2}` for `t = 0..T−1`.
    pub g_half: Vec<ParamVector>,
    /// `ξ̄_t`, aligned with `x_half`.
    pub xi: Vec<ParamVector>,
    /// `(1/K) Σ_k ‖x̄_{t+1/2} − x^k_{t+1/2}‖²` for `t = 0..T−1`.
    pub worker_deviation: Vec<f64>,
}

impl Trajectory {
    pub fn new(x0: ParamVector) -> Self {
        Self {
            x0,
            x_half: Vec::new(),
            g_half: Vec::new(),
            xi: Vec::new(),
            worker_deviation: Vec::new(),
        }
    }

    pub fn push(&mut self, trace: &StepTrace) {
        self.x_half.push(trace.x_half_mean.clone());
        self.g_half.push(trace.g_mean.clone());
        self.xi.push(trace.xi_mean.clone());
        self.worker_deviation.push(trace.worker_deviation);
    }

    /// Records the lookahead of step `T` so that `ȳ_T` can be formed.
    pub fn close(&mut self, x_half: ParamVector, xi: ParamVector) {
        self.x_half.push(x_half);
        self.xi.push(xi);
    }

    pub fn steps(&self) -> usize {
        self.g_half.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirtualSequence {
    /// `ȳ_t` for `t = 0..T`.
    pub y_bar: Vec<ParamVector>,
    pub x_bar_half: Vec<ParamVector>,
    pub g_bar_half: Vec<ParamVector>,
    pub xi_bar: Vec<ParamVector>,
    pub momentum_u: f64,
    pub gamma: f64,
    pub gamma_hat: f64,
}

/// Builds `ȳ_0 = x_0` and, for `t ≥ 1`,
/// `ȳ_t = [x̄_{t+1/2} − u·x̄_{t−1/2} + γu·ḡ_{t−1/2} + γ̂(ξ̄_t − u·ξ̄_{t−1})] / (1 − u)`.
/// Requires a constant learning rate `hp.lr_gamma` and constant γ̂.
pub fn build_virtual_sequence(
    traj: &Trajectory,
    hp: &HyperParams,
    method: &Method,
    workers_k: usize,
) -> Result<VirtualSequence> {
    if !method.has_virtual_sequence() {
        return Err(Error::config(
            "method",
            format!("{} has no virtual sequence", method.name()),
        ));
    }
    let t_steps = traj.steps();
    if t_steps == 0 {
        return Err(Error::MissingRecord("steps"));
    }
    if traj.x_half.len() != t_steps + 1 || traj.xi.len() != t_steps + 1 {
        return Err(Error::MissingRecord("final lookahead"));
    }
    let u = match method {
        Method::Sgd => 0.0,
        _ => hp.momentum_u,
    };
    let gamma = hp.lr_gamma;
    let gamma_hat = match method {
        Method::ExtrapSgd | Method::ExtrapNoise(_) => hp.gamma_hat(gamma, workers_k),
        _ => 0.0,
    };
    let inv = 1.0 / (1.0 - u);
    let mut y_bar = Vec::with_capacity(t_steps + 1);
    y_bar.push(traj.x0.clone());
    for t in 1..=t_steps {
        let (xh, xh_prev) = (&traj.x_half[t], &traj.x_half[t - 1]);
        let g_prev = &traj.g_half[t - 1];
        let (xi, xi_prev) = (&traj.xi[t], &traj.xi[t - 1]);
        let values = (0..xh.dim())
            .map(|i| {
                let extrap = gamma_hat * (xi.values()[i] - u * xi_prev.values()[i]);
                (xh.values()[i] - u * xh_prev.values()[i] + gamma * u * g_prev.values()[i] + extrap)
                    * inv
            })
            .collect();
        y_bar.push(xh.like(values));
    }
    Ok(VirtualSequence {
        y_bar,
        x_bar_half: traj.x_half[..t_steps].to_vec(),
        g_bar_half: traj.g_half.clone(),
        xi_bar: traj.xi[..t_steps].to_vec(),
        momentum_u: u,
        gamma,
        gamma_hat,
    })
}

/// `‖ȳ_{t+1} − ȳ_t + γ/(1−u)·ḡ_{t+1/2}‖ / max(1, ‖ȳ_t‖)` for each step.
pub fn check_descent_identity(vs: &VirtualSequence) -> Vec<f64> {
    let c = vs.gamma / (1.0 - vs.momentum_u);
    (0..vs.g_bar_half.len())
        .map(|t| {
            let (y0, y1, g) = (&vs.y_bar[t], &vs.y_bar[t + 1], &vs.g_bar_half[t]);
            let r2: f64 = (0..y0.dim())
                .map(|i| {
                    let r = y1.values()[i] - y0.values()[i] + c * g.values()[i];
                    r * r
                })
                .sum();
            r2.sqrt() / y0.norm().max(1.0)
        })
        .collect()
}
