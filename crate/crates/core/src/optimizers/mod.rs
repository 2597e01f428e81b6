//! Update rules. Every step takes the batches for the current step, the
//! learning rate γ_t and the hyperparameters, mutates the state in place and
//! returns a [`StepTrace`] with the averaged quantities the theory checks use.

mod adam;
mod extrap;
mod lars;
mod noise;
mod post_local;
mod schedule;

pub use adam::{step_adam, step_extrap_adam};
pub use extrap::{step_extrap_sgd, step_extrapolated_noise, step_minibatch_sgd, step_nesterov};
pub use lars::{apply_lars, lars_factor, lars_scale};
pub use noise::{filter_scale, sample_directions, NoiseKind, NoiseSpec};
pub use post_local::{step_post_local, PostLocalConfig};
pub use schedule::{lr_at, Schedule, ScheduleContext, ScheduleKind};

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, SampleBatch};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::params::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr_gamma: f64,
    /// γ̂. Defaults to γ_t / K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_lr_gamma_hat: Option<f64>,
    #[serde(default)]
    pub momentum_u: f64,
    /// γ̃; 0 disables LARS.
    #[serde(default)]
    pub lars_trust: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl HyperParams {
    pub fn new(lr_gamma: f64, momentum_u: f64) -> Self {
        Self {
            lr_gamma,
            inner_lr_gamma_hat: None,
            momentum_u,
            lars_trust: 0.0,
            weight_decay: 0.0,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
        }
    }

    pub fn with_gamma_hat(mut self, gamma_hat: f64) -> Self {
        self.inner_lr_gamma_hat = Some(gamma_hat);
        self
    }

    /// γ̂ in effect at a step with rate `lr` on `k` workers.
    pub fn gamma_hat(&self, lr: f64, k: usize) -> f64 {
        self.inner_lr_gamma_hat.unwrap_or(lr / k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("lr_gamma", self.lr_gamma)?;
        if let Some(gh) = self.inner_lr_gamma_hat {
            nonneg("inner_lr_gamma_hat", gh)?;
        }
        if !(self.momentum_u.is_finite() && (0.0..1.0).contains(&self.momentum_u)) {
            return Err(Error::config(
                "momentum_u",
                format!("must lie in [0, 1), got {}", self.momentum_u),
            ));
        }
        nonneg("lars_trust", self.lars_trust)?;
        nonneg("weight_decay", self.weight_decay)?;
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::config(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Method {
    #[serde(rename = "SGD")]
    Sgd,
    Nesterov,
    #[serde(rename = "ExtrapSGD")]
    ExtrapSgd,
    ExtrapNoise(NoiseSpec),
    ExtrapAdam {
        /// Take the square root of the second-moment term in the
        /// extrapolation denominator.
        #[serde(default)]
        extrap_denominator_sqrt: bool,
    },
    /// Adam without bias correction; the γ̂ = 0 limit of `ExtrapAdam`.
    Adam,
    PostLocal(PostLocalConfig),
}

/// Where the recorded gradient norm is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradPoint {
    #[serde(rename = "x_t")]
    Iterate,
    #[serde(rename = "x_{t+1/2}")]
    Lookahead,
    #[serde(rename = "mean_k x^k_{t+1/2}")]
    AveragedLookahead,
}

impl GradPoint {
    pub fn name(self) -> &'static str {
        match self {
            GradPoint::Iterate => "x_t",
            GradPoint::Lookahead => "x_{t+1/2}",
            GradPoint::AveragedLookahead => "mean_k x^k_{t+1/2}",
        }
    }
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Nesterov => "nesterov",
            Method::ExtrapSgd => "extrap-sgd",
            Method::ExtrapNoise(_) => "extrap-noise",
            Method::ExtrapAdam { .. } => "extrap-adam",
            Method::Adam => "adam",
            Method::PostLocal(_) => "post-local",
        }
    }

    pub fn all_names() -> [(&'static str, &'static str); 7] {
        [
            ("sgd", "mini-batch SGD, x <- x - lr * mean gradient"),
            ("nesterov", "mini-batch SGD with Nesterov momentum (lookahead x + u v)"),
            ("extrap-sgd", "Nesterov momentum plus extrapolation from each worker's past batch gradient"),
            ("extrap-noise", "extrapolation along Gaussian, uniform, shared or gradient-difference noise"),
            ("extrap-adam", "Adam whose gradients are taken at Adam-extrapolated points"),
            ("adam", "Adam without bias correction"),
            ("post-local", "extrap-sgd until t0, then local extrap-sgd with model averaging every H steps"),
        ]
    }

    pub fn grad_point(&self) -> GradPoint {
        match self {
            Method::Sgd | Method::Adam => GradPoint::Iterate,
            Method::Nesterov => GradPoint::Lookahead,
            _ => GradPoint::AveragedLookahead,
        }
    }

    /// Whether the method's iterates follow the momentum recurrence the
    /// virtual-sequence identity is stated for.
    pub fn has_virtual_sequence(&self) -> bool {
        matches!(
            self,
            Method::Sgd | Method::Nesterov | Method::ExtrapSgd | Method::ExtrapNoise(_)
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::ExtrapNoise(n) => n.validate(),
            Method::PostLocal(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: ParamVector,
    pub v: ParamVector,
    pub past_grad: Vec<ParamVector>,
    pub adam_m: ParamVector,
    pub adam_v: ParamVector,
    pub local_x: Vec<ParamVector>,
    pub local_v: Vec<ParamVector>,
    pub step_t: usize,
}

impl OptimizerState {
    pub fn new(x0: ParamVector, workers_k: usize) -> Self {
        let zero = x0.zeros_like();
        Self {
            v: zero.clone(),
            past_grad: vec![zero.clone(); workers_k],
            adam_m: zero.clone(),
            adam_v: zero,
            local_x: Vec::new(),
            local_v: Vec::new(),
            x: x0,
            step_t: 0,
        }
    }

    pub fn in_local_phase(&self) -> bool {
        !self.local_x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    /// `x̄_{t+1/2}`, the mean of the points gradients were taken at.
    pub x_half_mean: ParamVector,
    /// The reduced gradient actually applied (after LARS).
    pub g_mean: ParamVector,
    /// `ξ̄_t`, the mean extrapolation direction; zero when none was used.
    pub xi_mean: ParamVector,
    /// `(1/K) Σ_k ‖x̄_{t+1/2} − x^k_{t+1/2}‖²`.
    pub worker_deviation: f64,
    /// A post-local averaging happened at the end of this step.
    pub averaged: bool,
    /// `max_k ‖x^k − x̄‖` after the step, in the post-local phase.
    pub dispersion: Option<f64>,
    pub gradient_evaluations: usize,
}

pub(crate) struct WorkerGradients {
    pub grads: Vec<ParamVector>,
    /// Gradient over the first `b` batch samples, kept for extrapolation.
    pub past: Vec<ParamVector>,
    pub evaluations: usize,
}

/// Batch-mean gradient of every worker at its own point, plus `λ·x` weight decay.
pub(crate) fn worker_gradients(
    obj: &Objective,
    cluster: &Cluster,
    points: &[ParamVector],
    batches: &[SampleBatch],
    hp: &HyperParams,
) -> Result<WorkerGradients> {
    let k = cluster.k();
    if batches.len() != k || points.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: batches.len().min(points.len()),
        });
    }
    let b = cluster.cfg.extrap_b();
    let wd = hp.weight_decay;
    let pairs = cluster.map_workers(|w| {
        let x = &points[w];
        let idx = &batches[w].indices;
        let mut g = obj.batch_gradient(x, idx)?;
        if wd > 0.0 {
            g.axpy(wd, x);
        }
        let past = if b >= idx.len() {
            g.clone()
        } else {
            let mut p = obj.batch_gradient(x, &idx[..b])?;
            if wd > 0.0 {
                p.axpy(wd, x);
            }
            p
        };
        Ok((g, past))
    })?;
    let evaluations = batches
        .iter()
        .map(|s| s.indices.len() + if b >= s.indices.len() { 0 } else { b })
        .sum();
    let (grads, past) = pairs.into_iter().unzip();
    Ok(WorkerGradients {
        grads,
        past,
        evaluations,
    })
}

pub(crate) fn mean_deviation(points: &[ParamVector], mean: &ParamVector) -> f64 {
    points.iter().map(|p| p.dist2(mean)).sum::<f64>() / points.len() as f64
}

pub(crate) fn ensure_finite(v: &ParamVector, step: usize, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, what })
    }
}

/// Dispatches one step of `method`.
pub fn step(
    method: &Method,
    state: &mut OptimizerState,
    obj: &Objective,
    cluster: &Cluster,
    batches: &[SampleBatch],
    hp: &HyperParams,
    lr: f64,
) -> Result<StepTrace> {
    match method {
        Method::Sgd => step_minibatch_sgd(state, obj, cluster, batches, hp, lr),
        Method::Nesterov => step_nesterov(state, obj, cluster, batches, hp, lr),
        Method::ExtrapSgd => step_extrap_sgd(state, obj, cluster, batches, hp, lr),
        Method::ExtrapNoise(noise) => {
            step_extrapolated_noise(state, obj, cluster, batches, hp, lr, noise)
        }
        Method::ExtrapAdam {
            extrap_denominator_sqrt,
        } => step_extrap_adam(state, obj, cluster, batches, hp, lr, *extrap_denominator_sqrt),
        Method::Adam => step_adam(state, obj, cluster, batches, hp, lr),
        Method::PostLocal(plc) => step_post_local(state, obj, cluster, batches, hp, lr, plc),
    }
}

/// `(x̄_{t+1/2}, ξ̄_t)` the next step would use, without evaluating any
/// gradient or touching the state. Only for methods with a virtual sequence.
pub fn lookahead(
    method: &Method,
    state: &OptimizerState,
    cluster: &Cluster,
    hp: &HyperParams,
    lr: f64,
) -> Result<(ParamVector, ParamVector)> {
    if !method.has_virtual_sequence() {
        return Err(Error::config(
            "method",
            format!("{} has no virtual sequence", method.name()),
        ));
    }
    let plan = extrap::plan(method, state, cluster, hp, lr)?;
    Ok((plan.x_half_mean()?, plan.xi_mean(&state.x)?))
}
