//! Finite-sum objectives `f(x) = (1/N) Σ f_i(x)` with exact per-sample gradients.
//!
//! An [`ObjectiveSpec`] is the serializable description; [`Objective`] is the
//! materialized instance holding the generated data. Building twice from the
//! same spec yields bit-identical data.

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::{LogisticData, LogisticObjective};
pub use mlp::{parameter_count, MlpData, MlpObjective, MAX_HIDDEN_LAYERS};
pub use quadratic::{Hessian, QuadraticObjective, Shifts};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::seed::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub dimension: usize,
    pub sample_count: usize,
    #[serde(default)]
    pub generator_seed: u64,
    /// Contiguous block sizes for Quadratic and Logistic; TinyMLP derives its
    /// blocks from the layer shapes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub initial_point: InitialPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ObjectiveKind {
    Quadratic {
        hessian: Hessian,
        shifts: Shifts,
    },
    Logistic {
        #[serde(default)]
        lambda_reg: f64,
        data: LogisticData,
    },
    #[serde(rename = "TinyMLP")]
    TinyMlp {
        input_dim: usize,
        hidden: Vec<usize>,
        output_dim: usize,
        data: MlpData,
        /// Lower bound on the loss; 0 for squared error when unset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_star: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum InitialPoint {
    /// Gaussian with unit std for Quadratic, zeros for Logistic, fan-in
    /// scaled weights and zero biases for TinyMLP.
    #[default]
    Auto,
    Zeros,
    Gaussian {
        std: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

/// Constants entering the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub lipschitz_l: f64,
    pub variance_sigma2: f64,
    pub f_star: f64,
    pub r0: f64,
    pub horizon_t: usize,
    pub target_epsilon: f64,
    /// `false` when L or σ² is a sampled estimate rather than a closed form.
    pub analytic: bool,
}

impl TheoryConstants {
    pub fn with_horizon(mut self, horizon_t: usize, target_epsilon: f64) -> Self {
        self.horizon_t = horizon_t;
        self.target_epsilon = target_epsilon;
        self
    }
}

#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    Logistic(LogisticObjective),
    TinyMlp(MlpObjective),
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        if self.sample_count == 0 {
            return Err(Error::config("sample_count", "must be at least 1"));
        }
        if let Some(sizes) = &self.block_sizes {
            if matches!(self.kind, ObjectiveKind::TinyMlp { .. }) {
                return Err(Error::config(
                    "block_sizes",
                    "TinyMLP blocks follow the layer shapes",
                ));
            }
            if sizes.contains(&0) || sizes.iter().sum::<usize>() != self.dimension {
                return Err(Error::config(
                    "block_sizes",
                    "sizes must be positive and sum to dimension",
                ));
            }
        }
        match &self.initial_point {
            InitialPoint::Gaussian { std } if !(std.is_finite() && *std >= 0.0) => {
                return Err(Error::config("initial_point.std", "must be finite and >= 0"));
            }
            InitialPoint::Explicit { values } => {
                if values.len() != self.dimension {
                    return Err(Error::config(
                        "initial_point.values",
                        format!("length {} != dimension {}", values.len(), self.dimension),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("initial_point.values", "entries must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Objective> {
        self.validate()?;
        let obj = match &self.kind {
            ObjectiveKind::Quadratic { hessian, shifts } => Objective::Quadratic(
                QuadraticObjective::build(self, hessian, shifts).map_err(|e| e.within("kind"))?,
            ),
            ObjectiveKind::Logistic { lambda_reg, data } => Objective::Logistic(
                LogisticObjective::build(self, *lambda_reg, data).map_err(|e| e.within("kind"))?,
            ),
            ObjectiveKind::TinyMlp {
                input_dim,
                hidden,
                output_dim,
                data,
                f_star,
            } => Objective::TinyMlp(
                MlpObjective::build(self, *input_dim, hidden, *output_dim, data, *f_star)
                    .map_err(|e| e.within("kind"))?,
            ),
        };
        Ok(obj)
    }

    pub(crate) fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        match &self.block_sizes {
            #[allow(clippy::single_range_in_vec_init)]
            None => vec![0..self.dimension],
            Some(sizes) => {
                let mut start = 0;
                sizes
                    .iter()
                    .map(|s| {
                        let r = start..start + s;
                        start += s;
                        r
                    })
                    .collect()
            }
        }
    }
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::Logistic(l) => l.dim(),
            Objective::TinyMlp(m) => m.dim(),
        }
    }

    pub fn sample_count(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.sample_count(),
            Objective::Logistic(l) => l.sample_count(),
            Objective::TinyMlp(m) => m.sample_count(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::Quadratic(_) => "Quadratic",
            Objective::Logistic(_) => "Logistic",
            Objective::TinyMlp(_) => "TinyMLP",
        }
    }

    pub fn initial_point(&self) -> ParamVector {
        match self {
            Objective::Quadratic(q) => q.initial_point().clone(),
            Objective::Logistic(l) => l.initial_point().clone(),
            Objective::TinyMlp(m) => m.initial_point().clone(),
        }
    }

    fn check_x(&self, x: &ParamVector) -> Result<()> {
        x.check_dim(self.dim())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let n = self.sample_count();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(())
    }

    pub fn sample_gradient(&self, x: &ParamVector, i: usize) -> Result<ParamVector> {
        self.check_x(x)?;
        self.check_index(i)?;
        let g = match self {
            Objective::Quadratic(q) => q.sample_gradient(x.values(), i),
            Objective::Logistic(l) => l.sample_gradient(x.values(), i),
            Objective::TinyMlp(m) => m.sample_gradient(x.values(), i),
        };
        Ok(x.like(g))
    }

    /// Mean of the per-sample gradients over `indices`, accumulated in the
    /// order given.
    pub fn batch_gradient(&self, x: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
        self.check_x(x)?;
        if indices.is_empty() {
            return Err(Error::Empty("batch indices"));
        }
        for &i in indices {
            self.check_index(i)?;
        }
        let g = match self {
            Objective::Quadratic(q) => q.batch_gradient(x.values(), indices),
            Objective::Logistic(l) => l.batch_gradient(x.values(), indices),
            Objective::TinyMlp(m) => m.batch_gradient(x.values(), indices),
        };
        Ok(x.like(g))
    }

    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_x(x)?;
        let g = match self {
            Objective::Quadratic(q) => q.full_gradient(x.values()),
            Objective::Logistic(l) => l.full_gradient(x.values()),
            Objective::TinyMlp(m) => m.full_gradient(x.values()),
        };
        Ok(x.like(g))
    }

    pub fn loss_sample(&self, x: &ParamVector, i: usize) -> Result<f64> {
        self.check_x(x)?;
        self.check_index(i)?;
        Ok(match self {
            Objective::Quadratic(q) => q.loss_sample(x.values(), i),
            Objective::Logistic(l) => l.loss_sample(x.values(), i),
            Objective::TinyMlp(m) => m.loss_sample(x.values(), i),
        })
    }

    pub fn loss(&self, x: &ParamVector) -> Result<f64> {
        self.check_x(x)?;
        Ok(match self {
            Objective::Quadratic(q) => q.loss(x.values()),
            Objective::Logistic(l) => l.loss(x.values()),
            Objective::TinyMlp(m) => m.loss(x.values()),
        })
    }

    /// Lower bound f* on the loss.
    pub fn f_star(&self) -> f64 {
        match self {
            Objective::Quadratic(q) => q.f_star(),
            Objective::Logistic(_) => 0.0,
            Objective::TinyMlp(m) => m.f_star(),
        }
    }

    /// L and σ² at `x0`. Quadratic values are closed forms; Logistic L is
    /// analytic and σ² a sampled maximum; TinyMLP values are both sampled
    /// estimates. Sampled σ² is a lower bound on the uniform constant.
    pub fn estimate_constants(&self, x0: &ParamVector, probe_budget: usize) -> Result<TheoryConstants> {
        self.check_x(x0)?;
        if probe_budget == 0 {
            return Err(Error::config("probe_budget", "must be at least 1"));
        }
        let f_star = self.f_star();
        let r0 = (self.loss(x0)? - f_star).max(0.0);
        let (lipschitz_l, variance_sigma2, analytic) = match self {
            Objective::Quadratic(q) => (q.lambda_max(), q.sigma2_max(), true),
            Objective::Logistic(l) => (
                l.lipschitz(),
                self.sampled_sigma2(x0, probe_budget)?,
                false,
            ),
            Objective::TinyMlp(_) => (
                self.probed_lipschitz(x0, probe_budget)?,
                self.sampled_sigma2(x0, probe_budget)?,
                false,
            ),
        };
        Ok(TheoryConstants {
            lipschitz_l,
            variance_sigma2,
            f_star,
            r0,
            horizon_t: 0,
            target_epsilon: 0.0,
            analytic,
        })
    }

    /// Mean of `‖∇f_i(x) − ∇f(x)‖²` over all samples.
    pub fn gradient_variance(&self, x: &ParamVector) -> Result<f64> {
        let full = self.full_gradient(x)?;
        let n = self.sample_count();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.sample_gradient(x, i)?.dist2(&full);
        }
        Ok(acc / n as f64)
    }

    /// Max of `‖∇f_i(x) − ∇f(x)‖²` over `budget` samples. Uses every sample
    /// when `budget ≥ N`, otherwise a seeded subset.
    fn sampled_sigma2(&self, x: &ParamVector, budget: usize) -> Result<f64> {
        let full = self.full_gradient(x)?;
        let n = self.sample_count();
        let indices: Vec<usize> = if budget >= n {
            (0..n).collect()
        } else {
            let mut rng = seed::stream(self.data_seed(), Domain::Probe, &[0]);
            rand::seq::index::sample(&mut rng, n, budget).into_vec()
        };
        let mut worst: f64 = 0.0;
        for i in indices {
            worst = worst.max(self.sample_gradient(x, i)?.dist2(&full));
        }
        Ok(worst)
    }

    /// Largest secant ratio `‖∇f(x+δ) − ∇f(x)‖/‖δ‖` over `budget` seeded
    /// random directions at several radii.
    fn probed_lipschitz(&self, x: &ParamVector, budget: usize) -> Result<f64> {
        let g0 = self.full_gradient(x)?;
        let mut rng = seed::stream(self.data_seed(), Domain::Probe, &[1]);
        let mut best: f64 = 0.0;
        for _ in 0..budget {
            let dir: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let norm = crate::params::norm2(&dir).sqrt();
            if norm == 0.0 {
                continue;
            }
            for radius in [1e-3, 1e-2, 1e-1] {
                let mut y = x.clone();
                crate::params::axpy(y.values_mut(), radius / norm, &dir);
                let g = self.full_gradient(&y)?;
                best = best.max(g.dist2(&g0).sqrt() / radius);
            }
        }
        Ok(best)
    }

    fn data_seed(&self) -> u64 {
        match self {
            Objective::Quadratic(q) => q.seed(),
            Objective::Logistic(l) => l.seed(),
            Objective::TinyMlp(m) => m.seed(),
        }
    }
}

/// Central finite-difference gradient of `f_i` (or of `f` when `sample` is
/// `None`) with step `h`.
pub fn finite_difference_gradient(
    obj: &Objective,
    x: &ParamVector,
    sample: Option<usize>,
    h: f64,
) -> Result<ParamVector> {
    let eval = |y: &ParamVector| match sample {
        Some(i) => obj.loss_sample(y, i),
        None => obj.loss(y),
    };
    let mut g = vec![0.0; x.dim()];
    let mut y = x.clone();
    for (j, gj) in g.iter_mut().enumerate() {
        let orig = y.values()[j];
        y.values_mut()[j] = orig + h;
        let fp = eval(&y)?;
        y.values_mut()[j] = orig - h;
        let fm = eval(&y)?;
        y.values_mut()[j] = orig;
        *gj = (fp - fm) / (2.0 * h);
    }
    Ok(x.like(g))
}

pub(crate) fn gaussian_vec<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub(crate) fn resolve_initial(
    spec: &ObjectiveSpec,
    blocks: Vec<std::ops::Range<usize>>,
    auto: impl FnOnce(&mut rand_chacha::ChaCha8Rng) -> Vec<f64>,
) -> Result<ParamVector> {
    let mut rng = seed::stream(spec.generator_seed, Domain::Init, &[]);
    let values = match &spec.initial_point {
        InitialPoint::Auto => auto(&mut rng),
        InitialPoint::Zeros => vec![0.0; spec.dimension],
        InitialPoint::Gaussian { std } => gaussian_vec(&mut rng, spec.dimension, *std),
        InitialPoint::Explicit { values } => values.clone(),
    };
    ParamVector::with_blocks(values, blocks)
}
