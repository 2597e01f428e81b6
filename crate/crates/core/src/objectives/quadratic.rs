use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{gaussian_vec, resolve_initial, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::params::{dot, ParamVector};
use crate::seed::{self, Domain};

/// Shared Hessian `A` of `f_i(x) = ½(x − a_i)ᵀA(x − a_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Hessian {
    Identity,
    Diagonal { diag: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

/// Per-sample shifts `a_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Shifts {
    Explicit { points: Vec<Vec<f64>> },
    /// `a_i ~ N(0, std² I)`, drawn from the generator seed.
    Gaussian { std: f64 },
}

#[derive(Debug, Clone)]
enum Matrix {
    Diag(Vec<f64>),
    /// Row-major, `d × d`.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    d: usize,
    n: usize,
    a: Matrix,
    /// Row-major `N × d`.
    shifts: Vec<f64>,
    shift_mean: Vec<f64>,
    f_star: f64,
    lambda_max: f64,
    sigma2_max: f64,
    x0: ParamVector,
    seed: u64,
}

impl QuadraticObjective {
    pub(crate) fn build(spec: &ObjectiveSpec, hessian: &Hessian, shifts: &Shifts) -> Result<Self> {
        let d = spec.dimension;
        let n = spec.sample_count;
        let (a, lambda_max) = match hessian {
            Hessian::Identity => (Matrix::Diag(vec![1.0; d]), 1.0),
            Hessian::Diagonal { diag } => {
                if diag.len() != d {
                    return Err(Error::config(
                        "hessian.diag",
                        format!("length {} != dimension {d}", diag.len()),
                    ));
                }
                if diag.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::config("hessian.diag", "entries must be finite and >= 0"));
                }
                let top = diag.iter().cloned().fold(0.0, f64::max);
                (Matrix::Diag(diag.clone()), top)
            }
            Hessian::Dense { rows } => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::config("hessian.rows", format!("must be {d} x {d}")));
                }
                let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
                if flat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("hessian.rows", "entries must be finite"));
                }
                let m = DMatrix::from_row_slice(d, d, &flat);
                if (&m - m.transpose()).amax() > 0.0 {
                    return Err(Error::config("hessian.rows", "matrix is not symmetric"));
                }
                let eig = SymmetricEigen::new(m);
                let scale = eig.eigenvalues.amax().max(1.0);
                let lo = eig.eigenvalues.min();
                if lo < -1e-12 * scale {
                    return Err(Error::config(
                        "hessian.rows",
                        format!("matrix has negative eigenvalue {lo}"),
                    ));
                }
                (Matrix::Dense(flat), eig.eigenvalues.max().max(0.0))
            }
        };
        let shifts = match shifts {
            Shifts::Explicit { points } => {
                if points.len() != n {
                    return Err(Error::config(
                        "shifts.points",
                        format!("{} points but sample_count is {n}", points.len()),
                    ));
                }
                if points.iter().any(|p| p.len() != d) {
                    return Err(Error::config("shifts.points", format!("each point needs {d} entries")));
                }
                let flat: Vec<f64> = points.iter().flatten().cloned().collect();
                if flat.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("shifts.points", "entries must be finite"));
                }
                flat
            }
            Shifts::Gaussian { std } => {
                if !(std.is_finite() && *std >= 0.0) {
                    return Err(Error::config("shifts.std", "must be finite and >= 0"));
                }
                let mut rng = seed::stream(spec.generator_seed, Domain::Data, &[]);
                gaussian_vec(&mut rng, n * d, *std)
            }
        };
        let mut shift_mean = vec![0.0; d];
        for row in shifts.chunks_exact(d) {
            shift_mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        shift_mean.iter_mut().for_each(|m| *m /= n as f64);

        let x0 = resolve_initial(spec, spec.blocks(), |rng| gaussian_vec(rng, d, 1.0))?;
        let mut obj = Self {
            d,
            n,
            a,
            shifts,
            shift_mean,
            f_star: 0.0,
            lambda_max,
            sigma2_max: 0.0,
            x0,
            seed: spec.generator_seed,
        };
        let mut f_star = 0.0;
        let mut sigma2_max: f64 = 0.0;
        for i in 0..n {
            let diff: Vec<f64> = obj
                .shift(i)
                .iter()
                .zip(&obj.shift_mean)
                .map(|(a, m)| a - m)
                .collect();
            let ad = obj.apply(&diff);
            f_star += 0.5 * dot(&diff, &ad);
            sigma2_max = sigma2_max.max(dot(&ad, &ad));
        }
        obj.f_star = f_star / n as f64;
        obj.sigma2_max = sigma2_max;
        Ok(obj)
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

    pub fn shift(&self, i: usize) -> &[f64] {
        &self.shifts[i * self.d..(i + 1) * self.d]
    }

    /// The minimizer `ā = mean_i a_i`.
    pub fn minimizer(&self) -> &[f64] {
        &self.shift_mean
    }

    /// λ_max(A), the gradient Lipschitz constant.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `max_i ‖A(a_i − ā)‖²`. Gradient noise is independent of x for a
    /// shared Hessian, so this bounds the variance everywhere.
    pub fn sigma2_max(&self) -> f64 {
        self.sigma2_max
    }

    /// `½ mean_i (a_i − ā)ᵀA(a_i − ā)`, the minimum of f.
    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.a {
            Matrix::Diag(diag) => diag.iter().zip(v).map(|(a, x)| a * x).collect(),
            Matrix::Dense(m) => m.chunks_exact(self.d).map(|row| dot(row, v)).collect(),
        }
    }

    fn centered(&self, x: &[f64], c: &[f64]) -> Vec<f64> {
        x.iter().zip(c).map(|(x, c)| x - c).collect()
    }

    pub(crate) fn sample_gradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        self.apply(&self.centered(x, self.shift(i)))
    }

    pub(crate) fn batch_gradient(&self, x: &[f64], indices: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.d];
        for &i in indices {
            c.iter_mut().zip(self.shift(i)).for_each(|(c, a)| *c += a);
        }
        let b = indices.len() as f64;
        c.iter_mut().for_each(|c| *c /= b);
        self.apply(&self.centered(x, &c))
    }

    pub(crate) fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.apply(&self.centered(x, &self.shift_mean))
    }

    pub(crate) fn loss_sample(&self, x: &[f64], i: usize) -> f64 {
        let r = self.centered(x, self.shift(i));
        0.5 * dot(&r, &self.apply(&r))
    }

    pub(crate) fn loss(&self, x: &[f64]) -> f64 {
        let r = self.centered(x, &self.shift_mean);
        0.5 * dot(&r, &self.apply(&r)) + self.f_star
    }
}
