use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::params::ParamVector;

pub const DEFAULT_PROBES: usize = 8;
pub const DEFAULT_FRACTION: f64 = 0.3;

/// Largest secant ratio `‖∇f(x_j) − ∇f(x)‖ / ‖x_j − x‖` over the probes
/// `x_j = x + j·fraction·direction`, `j = 1..=probes`.
pub fn smoothness_estimate_with(
    obj: &Objective,
    x: &ParamVector,
    direction: &ParamVector,
    probes: usize,
    fraction: f64,
) -> Result<f64> {
    direction.check_dim(x.dim())?;
    if direction.norm2() == 0.0 || fraction == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let g0 = obj.full_gradient(x)?;
    let mut best: f64 = 0.0;
    for j in 1..=probes {
        let mut xj = x.clone();
        xj.axpy(j as f64 * fraction, direction);
        let disp = xj.dist2(x).sqrt();
        if disp == 0.0 {
            continue;
        }
        let gj = obj.full_gradient(&xj)?;
        best = best.max(gj.dist2(&g0).sqrt() / disp);
    }
    Ok(best)
}

pub fn smoothness_estimate(obj: &Objective, x: &ParamVector, direction: &ParamVector) -> Result<f64> {
    smoothness_estimate_with(obj, x, direction, DEFAULT_PROBES, DEFAULT_FRACTION)
}
