use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{gaussian_vec, resolve_initial, ObjectiveSpec};
use crate::error::{Error, Result};
use crate::params::{dot, ParamVector};
use crate::seed::{self, Domain};

pub const MAX_HIDDEN_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum MlpData {
    Explicit {
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
    },
    /// Gaussian inputs labelled by a random network of the same shape, plus
    /// Gaussian target noise.
    Teacher {
        #[serde(default = "one")]
        input_std: f64,
        #[serde(default = "one")]
        teacher_scale: f64,
        #[serde(default)]
        target_noise: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
struct Layer {
    fan_in: usize,
    /// Row-major `fan_out × fan_in` weight slice within the parameter vector.
    weights: Range<usize>,
    bias: Range<usize>,
}

/// Fully connected network, tanh hidden units, linear output, loss
/// `½‖net(u) − y‖²` per sample.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    layers: Vec<Layer>,
    d: usize,
    n: usize,
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    f_star: f64,
    x0: ParamVector,
    seed: u64,
}

fn layout(widths: &[usize]) -> (Vec<Layer>, usize) {
    let mut cursor = 0;
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = cursor..cursor + fan_in * fan_out;
            let bias = weights.end..weights.end + fan_out;
            cursor = bias.end;
            Layer {
                fan_in,
                weights,
                bias,
            }
        })
        .collect();
    (layers, cursor)
}

/// Parameter count of a network with the given widths.
pub fn parameter_count(input_dim: usize, hidden: &[usize], output_dim: usize) -> usize {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(output_dim);
    layout(&widths).1
}

fn forward_layer(layer: &Layer, params: &[f64], input: &[f64], hidden: bool) -> Vec<f64> {
    let w = &params[layer.weights.clone()];
    let b = &params[layer.bias.clone()];
    w.chunks_exact(layer.fan_in)
        .zip(b)
        .map(|(row, bias)| {
            let z = dot(row, input) + bias;
            if hidden {
                z.tanh()
            } else {
                z
            }
        })
        .collect()
}

fn forward(layers: &[Layer], params: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![input.to_vec()];
    for (l, layer) in layers.iter().enumerate() {
        let hidden = l + 1 < layers.len();
        let next = forward_layer(layer, params, acts.last().expect("non-empty"), hidden);
        acts.push(next);
    }
    acts
}

impl MlpObjective {
    pub(crate) fn build(
        spec: &ObjectiveSpec,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        data: &MlpData,
        f_star: Option<f64>,
    ) -> Result<Self> {
        if hidden.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::config(
                "hidden",
                format!("at most {MAX_HIDDEN_LAYERS} hidden layers are supported"),
            ));
        }
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        let (layers, d) = layout(&widths);
        if d != spec.dimension {
            return Err(Error::config(
                "dimension",
                format!("network has {d} parameters but dimension is {}", spec.dimension),
            ));
        }
        if let Some(fs) = f_star {
            if !fs.is_finite() {
                return Err(Error::config("f_star", "must be finite"));
            }
        }
        let n = spec.sample_count;
        let (inputs, targets) = match data {
            MlpData::Explicit { inputs, targets } => {
                if inputs.len() != n || targets.len() != n {
                    return Err(Error::config(
                        "data",
                        format!("need {n} inputs and targets, got {} and {}", inputs.len(), targets.len()),
                    ));
                }
                if inputs.iter().any(|u| u.len() != input_dim) {
                    return Err(Error::config("data.inputs", format!("each input needs {input_dim} entries")));
                }
                if targets.iter().any(|y| y.len() != output_dim) {
                    return Err(Error::config("data.targets", format!("each target needs {output_dim} entries")));
                }
                let u: Vec<f64> = inputs.iter().flatten().cloned().collect();
                let y: Vec<f64> = targets.iter().flatten().cloned().collect();
                if u.iter().chain(&y).any(|v| !v.is_finite()) {
                    return Err(Error::config("data", "entries must be finite"));
                }
                (u, y)
            }
            MlpData::Teacher {
                input_std,
                teacher_scale,
                target_noise,
            } => {
                for (name, v) in [
                    ("data.input_std", input_std),
                    ("data.teacher_scale", teacher_scale),
                    ("data.target_noise", target_noise),
                ] {
                    if !(v.is_finite() && *v >= 0.0) {
                        return Err(Error::config(name, "must be finite and >= 0"));
                    }
                }
                let mut rng = seed::stream(spec.generator_seed, Domain::Data, &[]);
                let teacher = fan_in_init(&layers, d, &mut rng, *teacher_scale, true);
                let inputs = gaussian_vec(&mut rng, n * input_dim, *input_std);
                let mut targets = Vec::with_capacity(n * output_dim);
                for u in inputs.chunks_exact(input_dim) {
                    let acts = forward(&layers, &teacher, u);
                    targets.extend_from_slice(acts.last().expect("output layer"));
                }
                let noise = gaussian_vec(&mut rng, n * output_dim, *target_noise);
                targets.iter_mut().zip(noise).for_each(|(y, e)| *y += e);
                (inputs, targets)
            }
        };
        let blocks: Vec<Range<usize>> = layers
            .iter()
            .flat_map(|l| [l.weights.clone(), l.bias.clone()])
            .collect();
        let x0 = resolve_initial(spec, blocks, |rng| fan_in_init(&layers, d, rng, 1.0, false))?;
        Ok(Self {
            layers,
            d,
            n,
            input_dim,
            output_dim,
            inputs,
            targets,
            f_star: f_star.unwrap_or(0.0),
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

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn predict(&self, x: &[f64], input: &[f64]) -> Vec<f64> {
        forward(&self.layers, x, input).pop().expect("output layer")
    }

    /// Adds `weight · ∇f_i(x)` to `g` by backpropagation.
    fn accumulate(&self, g: &mut [f64], x: &[f64], i: usize, weight: f64) {
        let acts = forward(&self.layers, x, self.input(i));
        let mut delta: Vec<f64> = acts
            .last()
            .expect("output layer")
            .iter()
            .zip(self.target(i))
            .map(|(p, y)| p - y)
            .collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let prev = &acts[l];
            let gw = &mut g[layer.weights.clone()];
            for (row, &dl) in gw.chunks_exact_mut(layer.fan_in).zip(&delta) {
                row.iter_mut()
                    .zip(prev)
                    .for_each(|(gij, a)| *gij += weight * dl * a);
            }
            g[layer.bias.clone()]
                .iter_mut()
                .zip(&delta)
                .for_each(|(gb, dl)| *gb += weight * dl);
            if l > 0 {
                let w = &x[layer.weights.clone()];
                let mut back = vec![0.0; layer.fan_in];
                for (row, &dl) in w.chunks_exact(layer.fan_in).zip(&delta) {
                    back.iter_mut().zip(row).for_each(|(b, wij)| *b += wij * dl);
                }
                delta = back
                    .iter()
                    .zip(prev)
                    .map(|(b, a)| b * (1.0 - a * a))
                    .collect();
            }
        }
    }

    pub(crate) fn sample_gradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.accumulate(&mut g, x, i, 1.0);
        g
    }

    pub(crate) fn batch_gradient(&self, x: &[f64], indices: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for &i in indices {
            self.accumulate(&mut g, x, i, 1.0);
        }
        let b = indices.len() as f64;
        g.iter_mut().for_each(|v| *v /= b);
        g
    }

    pub(crate) fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n).collect();
        self.batch_gradient(x, &all)
    }

    pub(crate) fn loss_sample(&self, x: &[f64], i: usize) -> f64 {
        let p = self.predict(x, self.input(i));
        0.5 * p
            .iter()
            .zip(self.target(i))
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
    }

    pub(crate) fn loss(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.loss_sample(x, i)).sum::<f64>() / self.n as f64
    }
}

/// Weights `N(0, scale²/fan_in)`; biases zero unless `random_bias`.
fn fan_in_init<R: rand::Rng>(
    layers: &[Layer],
    d: usize,
    rng: &mut R,
    scale: f64,
    random_bias: bool,
) -> Vec<f64> {
    let mut p = vec![0.0; d];
    for layer in layers {
        let std = scale / (layer.fan_in as f64).sqrt();
        let w = gaussian_vec(rng, layer.weights.len(), std);
        p[layer.weights.clone()].copy_from_slice(&w);
        if random_bias {
            let b = gaussian_vec(rng, layer.bias.len(), 0.1 * scale);
            p[layer.bias.clone()].copy_from_slice(&b);
        }
    }
    p
}
