//! K simulated synchronous workers: seeded per-worker sampling and a
//! fixed-order mean reduction.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::params::ParamVector;
use crate::seed::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SamplingMode {
    #[default]
    WithReplacement,
    EpochPermutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub workers_k: usize,
    pub local_batch_b: usize,
    /// Size of the batch prefix whose gradient is kept for the next
    /// extrapolation. Defaults to `local_batch_b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrap_batch_b: Option<usize>,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    /// Root of every sampling stream. The harness replaces it with the
    /// per-trial seed derived from the run's master seed.
    #[serde(default)]
    pub master_seed: u64,
}

impl ClusterConfig {
    pub fn new(workers_k: usize, local_batch_b: usize) -> Self {
        Self {
            workers_k,
            local_batch_b,
            extrap_batch_b: None,
            sampling_mode: SamplingMode::WithReplacement,
            master_seed: 0,
        }
    }

    pub fn extrap_b(&self) -> usize {
        self.extrap_batch_b.unwrap_or(self.local_batch_b)
    }

    /// Aggregate batch `K·B`.
    pub fn global_batch(&self) -> usize {
        self.workers_k * self.local_batch_b
    }

    pub fn validate(&self, sample_count: usize) -> Result<()> {
        if self.workers_k == 0 {
            return Err(Error::config("workers_k", "must be at least 1"));
        }
        if self.local_batch_b == 0 {
            return Err(Error::config("local_batch_b", "must be at least 1"));
        }
        if self.local_batch_b > sample_count {
            return Err(Error::config(
                "local_batch_b",
                format!("{} exceeds sample_count {sample_count}", self.local_batch_b),
            ));
        }
        let b = self.extrap_b();
        if b == 0 || b > self.local_batch_b {
            return Err(Error::config(
                "extrap_batch_b",
                format!("must lie in [1, local_batch_b = {}]", self.local_batch_b),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub worker: usize,
    pub step: usize,
    pub indices: Vec<usize>,
}

/// Batch of worker `k` at step `t`. A pure function of `(cfg, n, k, t)`.
pub fn draw_batch(cfg: &ClusterConfig, sample_count: usize, k: usize, t: usize) -> SampleBatch {
    let b = cfg.local_batch_b;
    let indices = match cfg.sampling_mode {
        SamplingMode::WithReplacement => {
            let mut rng = seed::stream(cfg.master_seed, Domain::Batch, &[k as u64, t as u64]);
            (0..b).map(|_| rng.random_range(0..sample_count)).collect()
        }
        SamplingMode::EpochPermutation => {
            let mut out = Vec::with_capacity(b);
            let mut cached: Option<(usize, Vec<usize>)> = None;
            for j in 0..b {
                let p = t * b + j;
                let epoch = p / sample_count;
                if cached.as_ref().map(|c| c.0) != Some(epoch) {
                    cached = Some((epoch, permutation(cfg.master_seed, k, epoch, sample_count)));
                }
                out.push(cached.as_ref().expect("just filled").1[p % sample_count]);
            }
            out
        }
    };
    SampleBatch {
        worker: k,
        step: t,
        indices,
    }
}

fn permutation(master_seed: u64, k: usize, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = seed::stream(master_seed, Domain::Permutation, &[k as u64, epoch as u64]);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

pub fn draw_batches(cfg: &ClusterConfig, sample_count: usize, t: usize) -> Vec<SampleBatch> {
    (0..cfg.workers_k)
        .map(|k| draw_batch(cfg, sample_count, k, t))
        .collect()
}

/// Arithmetic mean, summed in ascending index order then divided by K.
pub fn reduce_mean(vectors: &[ParamVector]) -> Result<ParamVector> {
    let first = vectors.first().ok_or(Error::Empty("reduce_mean input"))?;
    let mut acc = first.clone();
    for v in &vectors[1..] {
        v.check_dim(first.dim())?;
        acc.axpy(1.0, v);
    }
    if vectors.len() > 1 {
        let k = vectors.len() as f64;
        acc.values_mut().iter_mut().for_each(|a| *a /= k);
    }
    Ok(acc)
}

/// A cluster bound to a dataset size and an execution strategy.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub cfg: ClusterConfig,
    pub sample_count: usize,
    pub parallelism: Parallelism,
}

impl Cluster {
    pub fn new(cfg: ClusterConfig, sample_count: usize, parallelism: Parallelism) -> Result<Self> {
        cfg.validate(sample_count)?;
        Ok(Self {
            cfg,
            sample_count,
            parallelism,
        })
    }

    pub fn k(&self) -> usize {
        self.cfg.workers_k
    }

    pub fn draw_batches(&self, t: usize) -> Vec<SampleBatch> {
        draw_batches(&self.cfg, self.sample_count, t)
    }

    /// Evaluates `f(k)` for every worker, possibly concurrently; results are
    /// returned in worker order.
    pub fn map_workers<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.parallelism.try_map_range(self.k(), f)
    }
}
