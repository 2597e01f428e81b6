use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_vec, resolve_initial, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::params::{axpy, dot, norm2, ParamVector};
use crate::seed::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LogisticData {
    Explicit {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
    },
    /// Gaussian features; labels are the sign of a random teacher's margin,
    /// each flipped with probability `label_noise`.
    Generated {
        #[serde(default = "one")]
        feature_std: f64,
        #[serde(default)]
        label_noise: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct LogisticObjective {
    d: usize,
    n: usize,
    /// Row-major `N × d`.
    features: Vec<f64>,
    labels: Vec<f64>,
    lambda: f64,
    x0: ParamVector,
    seed: u64,
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub(crate) fn build(spec: &ObjectiveSpec, lambda: f64, data: &LogisticData) -> Result<Self> {
        let d = spec.dimension;
        let n = spec.sample_count;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config("lambda_reg", "must be finite and >= 0"));
        }
        let (features, labels) = match data {
            LogisticData::Explicit { features, labels } => {
                if features.len() != n || labels.len() != n {
                    return Err(Error::config(
                        "data",
                        format!("need {n} feature rows and labels, got {} and {}", features.len(), labels.len()),
                    ));
                }
                if features.iter().any(|r| r.len() != d) {
                    return Err(Error::config("data.features", format!("each row needs {d} entries")));
                }
                if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::config("data.labels", "labels must be +1 or -1"));
                }
                let flat: Vec<f64> = features.iter().flatten().cloned().collect();
                if flat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("data.features", "entries must be finite"));
                }
                (flat, labels.clone())
            }
            LogisticData::Generated {
                feature_std,
                label_noise,
            } => {
                if !(feature_std.is_finite() && *feature_std >= 0.0) {
                    return Err(Error::config("data.feature_std", "must be finite and >= 0"));
                }
                if !(0.0..=1.0).contains(label_noise) {
                    return Err(Error::config("data.label_noise", "must lie in [0, 1]"));
                }
                let mut rng = seed::stream(spec.generator_seed, Domain::Data, &[]);
                let teacher = gaussian_vec(&mut rng, d, 1.0);
                let features = gaussian_vec(&mut rng, n * d, *feature_std);
                let labels = features
                    .chunks_exact(d)
                    .map(|row| {
                        let y = if dot(row, &teacher) >= 0.0 { 1.0 } else { -1.0 };
                        if rng.random::<f64>() < *label_noise {
                            -y
                        } else {
                            y
                        }
                    })
                    .collect();
                (features, labels)
            }
        };
        let x0 = resolve_initial(spec, spec.blocks(), |_| vec![0.0; d])?;
        Ok(Self {
            d,
            n,
            features,
            labels,
            lambda,
            x0,
            seed: spec.generator_seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn initial_point(&self) -> &ParamVector {
        &self.x0
    }

    pub(crate) fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// `max_i ‖a_i‖²/4 + λ`.
    pub fn lipschitz(&self) -> f64 {
        let top = self
            .features
            .chunks_exact(self.d)
            .map(norm2)
            .fold(0.0, f64::max);
        top / 4.0 + self.lambda
    }

    fn add_sample_gradient(&self, g: &mut [f64], x: &[f64], i: usize, weight: f64) {
        let a = self.feature(i);
        let y = self.labels[i];
        let coeff = -y * sigmoid(-y * dot(a, x));
        axpy(g, weight * coeff, a);
    }

    pub(crate) fn sample_gradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        let mut g: Vec<f64> = x.iter().map(|w| self.lambda * w).collect();
        self.add_sample_gradient(&mut g, x, i, 1.0);
        g
    }

    pub(crate) fn batch_gradient(&self, x: &[f64], indices: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for &i in indices {
            self.add_sample_gradient(&mut g, x, i, 1.0);
        }
        let b = indices.len() as f64;
        g.iter_mut()
            .zip(x)
            .for_each(|(gi, w)| *gi = *gi / b + self.lambda * w);
        g
    }

    pub(crate) fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n).collect();
        self.batch_gradient(x, &all)
    }

    pub(crate) fn loss_sample(&self, x: &[f64], i: usize) -> f64 {
        softplus(-self.labels[i] * dot(self.feature(i), x)) + 0.5 * self.lambda * norm2(x)
    }

    pub(crate) fn loss(&self, x: &[f64]) -> f64 {
        let data: f64 = (0..self.n)
            .map(|i| softplus(-self.labels[i] * dot(self.feature(i), x)))
            .sum();
        data / self.n as f64 + 0.5 * self.lambda * norm2(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_symmetry() {
        for z in [-30.0, -1.0, 0.0, 2.5, 40.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }
}
