//! Executable versions of the convergence analysis: virtual sequences and
//! their identities, the proximity lemmas, rate bounds, critical batch sizes,
//! the stepsize tuner and the smoothness estimator.

mod bounds;
mod smoothness;
mod virtual_seq;

pub use bounds::{
    critical_batch_size, extrap_bound, family, nesterov_bound, noise_bound, rate_bound,
    rate_bound_report, stepsize_cap, tune_stepsize, BoundFamily, RateBound, RateBoundReport,
};
pub use smoothness::{smoothness_estimate, smoothness_estimate_with, DEFAULT_FRACTION, DEFAULT_PROBES};
pub use virtual_seq::{build_virtual_sequence, check_descent_identity, Trajectory, VirtualSequence};

use serde::Serialize;

use crate::cluster::ClusterConfig;
use crate::optimizers::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl InequalityCheck {
    fn evaluate(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            rhs,
            margin: rhs - lhs,
            verdict: if lhs <= rhs { Verdict::Holds } else { Verdict::Violated },
            note: None,
        }
    }

    fn not_applicable(name: &'static str, lhs: f64, rhs: f64, why: String) -> Self {
        Self {
            name,
            lhs,
            rhs,
            margin: rhs - lhs,
            verdict: Verdict::NotApplicable,
            note: Some(why),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProximityReport {
    /// `Σ_t ‖ȳ_t − x̄_{t+1/2}‖² ≤ 4u⁴γ²/(1−u)⁴ · Σ_t ‖ḡ_{t+1/2}‖²`.
    pub virtual_distance: InequalityCheck,
    /// Time average of `(1/K) Σ_k ‖x̄_{t+1/2} − x^k_{t+1/2}‖²` against
    /// `4γ̂²σ²/b` (past gradients) or `2γ̂²σ̂²` (IID noise).
    pub worker_deviation: InequalityCheck,
}

/// Evaluates both proximity lemmas on one trajectory, with γ, γ̂ and u taken
/// from the virtual sequence. `sigma2` is the
/// gradient-variance constant and `sigma_hat2` the noise second moment.
pub fn check_proximity_inequalities(
    traj: &Trajectory,
    vs: &VirtualSequence,
    method: &Method,
    cluster: &ClusterConfig,
    sigma2: f64,
    sigma_hat2: Option<f64>,
) -> ProximityReport {
    let u = vs.momentum_u;
    let gamma = vs.gamma;
    let gamma_hat = vs.gamma_hat;
    let one_m = 1.0 - u;

    let lhs: f64 = vs
        .y_bar
        .iter()
        .zip(&vs.x_bar_half)
        .map(|(y, x)| y.dist2(x))
        .sum();
    let g_sum: f64 = vs.g_bar_half.iter().map(|g| g.norm2()).sum();
    let rhs = 4.0 * u.powi(4) * gamma * gamma / one_m.powi(4) * g_sum;
    let hat_cap = u * u * gamma / (one_m * one_m);
    let virtual_distance = match method {
        Method::ExtrapNoise(_) => InequalityCheck::not_applicable(
            "virtual_distance",
            lhs,
            rhs,
            "stated for past-gradient extrapolation".into(),
        ),
        _ if gamma_hat > hat_cap => InequalityCheck::not_applicable(
            "virtual_distance",
            lhs,
            rhs,
            format!("inner stepsize {gamma_hat} exceeds u^2 gamma/(1-u)^2 = {hat_cap}"),
        ),
        _ => InequalityCheck::evaluate("virtual_distance", lhs, rhs),
    };

    let dev = if traj.worker_deviation.is_empty() {
        0.0
    } else {
        traj.worker_deviation.iter().sum::<f64>() / traj.worker_deviation.len() as f64
    };
    let worker_deviation = match method {
        Method::ExtrapNoise(n) if n.is_iid() => match sigma_hat2 {
            Some(s) => InequalityCheck::evaluate("worker_deviation", dev, 2.0 * gamma_hat * gamma_hat * s),
            None => InequalityCheck::not_applicable(
                "worker_deviation",
                dev,
                f64::INFINITY,
                "noise second moment unknown".into(),
            ),
        },
        Method::ExtrapNoise(_) => InequalityCheck::not_applicable(
            "worker_deviation",
            dev,
            f64::INFINITY,
            "noise is not IID across workers".into(),
        ),
        _ => {
            let b = cluster.extrap_b() as f64;
            InequalityCheck::evaluate("worker_deviation", dev, 4.0 * gamma_hat * gamma_hat * sigma2 / b)
        }
    };
    ProximityReport {
        virtual_distance,
        worker_deviation,
    }
}
