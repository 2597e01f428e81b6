//! Extrapolation directions drawn from noise instead of past gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::reduce_mean;
use crate::error::{Error, Result};
use crate::params::{norm2, ParamVector};
use crate::seed::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    None,
    IsotropicGaussian,
    IsotropicUniform,
    /// One uniform draw per step shared by every worker.
    SmoothOutShared,
    /// Local past gradient minus the cross-worker mean of past gradients.
    AnisotropicStochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub filter_scaled: bool,
    /// Std (Gaussian) or half-width (uniform) before filter scaling.
    #[serde(default = "one")]
    pub raw_scale: f64,
    /// Second moment σ̂² used by the theory checks. When unset it is derived
    /// from `raw_scale` for the unscaled isotropic kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma_hat2: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, raw_scale: f64) -> Self {
        Self {
            kind,
            filter_scaled: false,
            raw_scale,
            noise_sigma_hat2: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NoiseKind::None {
            return Err(Error::config("kind", "noise extrapolation needs a noise kind other than None"));
        }
        if !(self.raw_scale.is_finite() && self.raw_scale >= 0.0) {
            return Err(Error::config("raw_scale", "must be finite and >= 0"));
        }
        if let Some(s) = self.noise_sigma_hat2 {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("noise_sigma_hat2", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// `E‖ζ‖²` for a `d`-dimensional draw: `d·s²` (Gaussian), `d·s²/3`
    /// (uniform on `[−s, s]`). `None` when it depends on the iterate
    /// (filter scaling) or on the data (anisotropic).
    pub fn sigma_hat2(&self, d: usize) -> Option<f64> {
        if let Some(s) = self.noise_sigma_hat2 {
            return Some(s);
        }
        if self.filter_scaled {
            return None;
        }
        let s2 = self.raw_scale * self.raw_scale;
        match self.kind {
            NoiseKind::IsotropicGaussian => Some(d as f64 * s2),
            NoiseKind::IsotropicUniform | NoiseKind::SmoothOutShared => Some(d as f64 * s2 / 3.0),
            NoiseKind::None | NoiseKind::AnisotropicStochastic => None,
        }
    }

    /// True when ζ^k are independent zero-mean draws across workers.
    pub fn is_iid(&self) -> bool {
        matches!(self.kind, NoiseKind::IsotropicGaussian | NoiseKind::IsotropicUniform)
    }
}

fn draw<R: Rng>(rng: &mut R, n: usize, kind: NoiseKind, scale: f64) -> Vec<f64> {
    match kind {
        NoiseKind::IsotropicGaussian => (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        _ => (0..n).map(|_| scale * rng.random_range(-1.0..=1.0)).collect(),
    }
}

/// Rescales each block of `z` to the norm of the matching block of `x`.
/// A zero-norm noise block stays zero.
pub fn filter_scale(z: &mut ParamVector, x: &ParamVector) {
    for block in x.blocks().to_vec() {
        let zn = norm2(&z.values()[block.clone()]).sqrt();
        let xn = norm2(&x.values()[block.clone()]).sqrt();
        let s = if zn == 0.0 { 0.0 } else { xn / zn };
        z.values_mut()[block].iter_mut().for_each(|v| *v *= s);
    }
}

/// Per-worker directions ζ^k_t. Random kinds are pure functions of
/// `(seed, k, t)`. `anchors[k]` is the iterate worker k extrapolates from,
/// used for filter scaling.
pub fn sample_directions(
    spec: &NoiseSpec,
    seed: u64,
    t: usize,
    anchors: &[&ParamVector],
    past_grad: &[ParamVector],
) -> Result<Vec<ParamVector>> {
    let k = anchors.len();
    let template = anchors.first().ok_or(Error::Empty("worker anchors"))?;
    let d = template.dim();
    let mut out: Vec<ParamVector> = match spec.kind {
        NoiseKind::None => vec![template.zeros_like(); k],
        NoiseKind::IsotropicGaussian | NoiseKind::IsotropicUniform => (0..k)
            .map(|w| {
                let mut rng = seed::stream(seed, Domain::Noise, &[w as u64, t as u64]);
                template.like(draw(&mut rng, d, spec.kind, spec.raw_scale))
            })
            .collect(),
        NoiseKind::SmoothOutShared => {
            let mut rng = seed::stream(seed, Domain::SharedNoise, &[t as u64]);
            let z = template.like(draw(&mut rng, d, spec.kind, spec.raw_scale));
            vec![z; k]
        }
        NoiseKind::AnisotropicStochastic => {
            let mean = reduce_mean(past_grad)?;
            past_grad.iter().map(|g| g.sub(&mean)).collect()
        }
    };
    if spec.filter_scaled {
        for (z, x) in out.iter_mut().zip(anchors) {
            filter_scale(z, x);
        }
    }
    Ok(out)
}
