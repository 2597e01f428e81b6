//! Right-hand sides of the convergence bounds, critical batch sizes and the
//! two-case stepsize tuner.

use serde::Serialize;

use crate::cluster::ClusterConfig;
use crate::objectives::TheoryConstants;
use crate::optimizers::{HyperParams, Method};

/// Which bound family a method falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundFamily {
    /// Mini-batch SGD; the momentum bound at `u = 0`.
    MinibatchSgd,
    Nesterov,
    /// Extrapolation from past local gradients.
    PastGradient,
    /// Extrapolation along IID noise.
    IidNoise,
    /// No bound is stated.
    Unsupported,
}

pub fn family(method: &Method) -> BoundFamily {
    match method {
        Method::Sgd => BoundFamily::MinibatchSgd,
        Method::Nesterov => BoundFamily::Nesterov,
        Method::ExtrapSgd => BoundFamily::PastGradient,
        Method::ExtrapNoise(n) if n.is_iid() => BoundFamily::IidNoise,
        _ => BoundFamily::Unsupported,
    }
}

fn momentum(method: &Method, hp: &HyperParams) -> f64 {
    match method {
        Method::Sgd => 0.0,
        _ => hp.momentum_u,
    }
}

/// Largest γ for which the method's bound is stated.
pub fn stepsize_cap(method: &Method, l: f64, u: f64) -> f64 {
    let one_m = 1.0 - u;
    let u3 = u * u * u;
    match family(method) {
        BoundFamily::MinibatchSgd | BoundFamily::Nesterov => 2.0 * one_m * one_m / (l * (u3 + 1.0)),
        BoundFamily::PastGradient | BoundFamily::Unsupported => {
            one_m * one_m / (l * (1.0 + 3.0 * u + u3))
        }
        BoundFamily::IidNoise => one_m * one_m / (l * (1.0 + u + u3)),
    }
}

/// Momentum bound:
/// `[1 − Lγ(u³+1)/(2(1−u)²)]⁻¹ · ((1−u)r0/(γT) + γL/(2(1−u)²) · σ²/(BK))`.
pub fn nesterov_bound(tc: &TheoryConstants, gamma: f64, u: f64, b: usize, k: usize, t: usize) -> f64 {
    let l = tc.lipschitz_l;
    let one_m = 1.0 - u;
    let denom = 1.0 - l * gamma * (u.powi(3) + 1.0) / (2.0 * one_m * one_m);
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    let first = one_m * tc.r0 / (gamma * t as f64);
    let second = gamma * l / (2.0 * one_m * one_m) * tc.variance_sigma2 / (b * k) as f64;
    (first + second) / denom
}

/// Past-gradient extrapolation bound:
/// `2(1−u)r0/(γT) + (4γ̂²L²/B + γL(1+3u)/((1−u)²BK))·σ²`.
pub fn extrap_bound(
    tc: &TheoryConstants,
    gamma: f64,
    gamma_hat: f64,
    u: f64,
    b: usize,
    k: usize,
    t: usize,
) -> f64 {
    let l = tc.lipschitz_l;
    let one_m = 1.0 - u;
    let first = 2.0 * one_m * tc.r0 / (gamma * t as f64);
    let coeff = 4.0 * gamma_hat * gamma_hat * l * l / b as f64
        + gamma * l * (1.0 + 3.0 * u) / (one_m * one_m * (b * k) as f64);
    first + coeff * tc.variance_sigma2
}

/// IID-noise extrapolation bound:
/// `2(1−u)r0/(γT) + γL(1+u)σ²/((1−u)²BK) + (L² + (1−u)²L/(γu³K))·2γ̂²Tσ̂²`.
/// Infinite at `u = 0` with `γ̂ > 0`, and grows linearly in T.
#[allow(clippy::too_many_arguments)]
pub fn noise_bound(
    tc: &TheoryConstants,
    gamma: f64,
    gamma_hat: f64,
    u: f64,
    sigma_hat2: f64,
    b: usize,
    k: usize,
    t: usize,
) -> f64 {
    let l = tc.lipschitz_l;
    let one_m = 1.0 - u;
    let tf = t as f64;
    let first = 2.0 * one_m * tc.r0 / (gamma * tf);
    let second = gamma * l * (1.0 + u) * tc.variance_sigma2 / (one_m * one_m * (b * k) as f64);
    let noise = 2.0 * gamma_hat * gamma_hat * tf * sigma_hat2;
    let third = if noise == 0.0 {
        0.0
    } else {
        (l * l + one_m * one_m * l / (gamma * u.powi(3) * k as f64)) * noise
    };
    first + second + third
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBound {
    pub family: BoundFamily,
    pub bound_value: f64,
    pub stepsize_cap: f64,
    /// False when a stepsize precondition fails or the method has no bound.
    pub asserted: bool,
    pub note: Option<String>,
}

/// Evaluates the bound for `method` at `γ = hp.lr_gamma`, horizon `t`.
/// `sigma_hat2` is only used by the IID-noise bound.
pub fn rate_bound(
    method: &Method,
    tc: &TheoryConstants,
    hp: &HyperParams,
    cluster: &ClusterConfig,
    t: usize,
    sigma_hat2: Option<f64>,
) -> RateBound {
    let fam = family(method);
    let u = momentum(method, hp);
    let gamma = hp.lr_gamma;
    let (b, k) = (cluster.local_batch_b, cluster.workers_k);
    let cap = stepsize_cap(method, tc.lipschitz_l, u);
    let gamma_hat = hp.gamma_hat(gamma, k);
    let mut note = None;
    let mut asserted = gamma > 0.0 && gamma <= cap && t > 0;
    if gamma > cap {
        note = Some(format!("stepsize {gamma} exceeds cap {cap}"));
    }
    let bound_value = match fam {
        BoundFamily::MinibatchSgd | BoundFamily::Nesterov => nesterov_bound(tc, gamma, u, b, k, t),
        BoundFamily::PastGradient => {
            let hat_cap = u * u * gamma / ((1.0 - u) * (1.0 - u));
            if gamma_hat > hat_cap {
                asserted = false;
                note = Some(format!("inner stepsize {gamma_hat} exceeds u^2 gamma/(1-u)^2 = {hat_cap}"));
            }
            extrap_bound(tc, gamma, gamma_hat, u, b, k, t)
        }
        BoundFamily::IidNoise => match sigma_hat2 {
            Some(s) => noise_bound(tc, gamma, gamma_hat, u, s, b, k, t),
            None => {
                asserted = false;
                note = Some("noise second moment unknown".into());
                f64::INFINITY
            }
        },
        BoundFamily::Unsupported => {
            asserted = false;
            note = Some(format!("no bound stated for {}", method.name()));
            f64::INFINITY
        }
    };
    RateBound {
        family: fam,
        bound_value,
        stepsize_cap: cap,
        asserted,
        note,
    }
}

/// Order estimate (unit constants) of the aggregate batch `K·B` beyond which
/// the `1/T` term dominates. `T` is `tc.horizon_t`.
pub fn critical_batch_size(method: &Method, tc: &TheoryConstants, hp: &HyperParams) -> f64 {
    let u = momentum(method, hp);
    let base = tc.variance_sigma2 * tc.horizon_t as f64 / (tc.lipschitz_l * tc.r0);
    let factor = match method {
        Method::Sgd | Method::Adam => 1.0,
        Method::Nesterov => (1.0 - u) / (u.powi(3) + 1.0).powi(2),
        _ => (19.0 * u + 1.0) * (1.0 - u) / (u.powi(3) + 3.0 * u + 1.0).powi(3),
    };
    if base.is_nan() {
        return f64::INFINITY;
    }
    factor * base
}

/// `min(cap, candidate)` where the candidate minimizes the bound's
/// `r0/γT + γσ²` trade-off:
/// momentum `√(2·r0·KB(1−u)³/(Lσ²T))`,
/// past-gradient `√(2·r0·KB(u³+3u+1)(1−u)³/((19u+1)Lσ²T))`.
pub fn tune_stepsize(
    method: &Method,
    tc: &TheoryConstants,
    hp: &HyperParams,
    cluster: &ClusterConfig,
    t: usize,
) -> f64 {
    let u = momentum(method, hp);
    let l = tc.lipschitz_l;
    if l == 0.0 {
        return f64::INFINITY;
    }
    let cap = stepsize_cap(method, l, u);
    let kb = cluster.global_batch() as f64;
    let one_m3 = (1.0 - u).powi(3);
    let base = 2.0 * tc.r0 * kb * one_m3 / (l * tc.variance_sigma2 * t as f64);
    let candidate = match family(method) {
        BoundFamily::MinibatchSgd | BoundFamily::Nesterov | BoundFamily::IidNoise => base.sqrt(),
        BoundFamily::PastGradient | BoundFamily::Unsupported => {
            (base * (u.powi(3) + 3.0 * u + 1.0) / (19.0 * u + 1.0)).sqrt()
        }
    };
    if candidate.is_nan() {
        return cap;
    }
    cap.min(candidate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundReport {
    pub method: String,
    pub grad_point: &'static str,
    pub bound_value: f64,
    pub measured_min_grad_norm2: f64,
    pub measured_avg_grad_norm2: f64,
    pub constants_used: TheoryConstants,
    pub stepsize_cap: f64,
    pub asserted: bool,
    pub holds: bool,
    pub note: Option<String>,
}

/// Compares the bound against `grad_norm2[t] = ‖∇f(·)‖²` at the method's
/// designated point for `t = 0..T−1`.
pub fn rate_bound_report(
    method: &Method,
    tc: &TheoryConstants,
    hp: &HyperParams,
    cluster: &ClusterConfig,
    grad_norm2: &[f64],
    sigma_hat2: Option<f64>,
) -> RateBoundReport {
    let t = grad_norm2.len();
    let rb = rate_bound(method, tc, hp, cluster, t, sigma_hat2);
    let avg = if t == 0 {
        f64::NAN
    } else {
        grad_norm2.iter().sum::<f64>() / t as f64
    };
    let min = grad_norm2.iter().cloned().fold(f64::INFINITY, f64::min);
    RateBoundReport {
        method: method.name().to_string(),
        grad_point: method.grad_point().name(),
        bound_value: rb.bound_value,
        measured_min_grad_norm2: min,
        measured_avg_grad_norm2: avg,
        constants_used: tc.with_horizon(t, tc.target_epsilon),
        stepsize_cap: rb.stepsize_cap,
        asserted: rb.asserted,
        holds: avg <= rb.bound_value,
        note: rb.note,
    }
}
