#![allow(dead_code)]

use extrap_core::cluster::{Cluster, ClusterConfig};
use extrap_core::harness::RunConfig;
use extrap_core::objectives::{
    Hessian, InitialPoint, LogisticData, MlpData, Objective, ObjectiveKind, ObjectiveSpec, Shifts,
};
use extrap_core::optimizers::{self, HyperParams, Method, OptimizerState};
use extrap_core::par::Parallelism;
use extrap_core::ParamVector;

pub fn quadratic(diag: Vec<f64>, n: usize, std: f64, seed: u64) -> ObjectiveSpec {
    let d = diag.len();
    ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal { diag },
            shifts: Shifts::Gaussian { std },
        },
        dimension: d,
        sample_count: n,
        generator_seed: seed,
        block_sizes: None,
        initial_point: InitialPoint::Explicit { values: vec![2.0; d] },
    }
}

pub fn small_quadratic() -> ObjectiveSpec {
    let mut s = quadratic(vec![0.5, 1.0, 2.0, 3.0], 64, 1.0, 1);
    s.block_sizes = Some(vec![2, 2]);
    s
}

pub fn logistic(d: usize, n: usize, seed: u64) -> ObjectiveSpec {
    ObjectiveSpec {
        kind: ObjectiveKind::Logistic {
            lambda_reg: 0.01,
            data: LogisticData::Generated {
                feature_std: 1.0,
                label_noise: 0.1,
            },
        },
        dimension: d,
        sample_count: n,
        generator_seed: seed,
        block_sizes: None,
        initial_point: InitialPoint::Gaussian { std: 0.3 },
    }
}

/// 3 → 5 → 2 network with 32 parameters.
pub fn tiny_mlp(n: usize, seed: u64) -> ObjectiveSpec {
    ObjectiveSpec {
        kind: ObjectiveKind::TinyMlp {
            input_dim: 3,
            hidden: vec![5],
            output_dim: 2,
            data: MlpData::Teacher {
                input_std: 1.0,
                teacher_scale: 1.0,
                target_noise: 0.1,
            },
            f_star: None,
        },
        dimension: 3 * 5 + 5 + 5 * 2 + 2,
        sample_count: n,
        generator_seed: seed,
        block_sizes: None,
        initial_point: InitialPoint::Auto,
    }
}

pub fn all_objectives() -> Vec<ObjectiveSpec> {
    vec![small_quadratic(), logistic(6, 80, 2), tiny_mlp(60, 3)]
}

pub fn config(objective: ObjectiveSpec, method: Method, hp: HyperParams, k: usize, b: usize, t: usize) -> RunConfig {
    RunConfig {
        objective,
        cluster: ClusterConfig::new(k, b),
        method,
        hyperparams: hp,
        schedule: None,
        total_steps_t: t,
        record_every: 1,
        record_virtual_sequence: false,
        record_smoothness_every: 0,
        trials: 1,
        master_seed: 17,
        probe_budget: 32,
    }
}

/// Drives `method` for `steps` steps and returns the iterate after each one.
pub fn iterates(
    obj: &Objective,
    method: &Method,
    hp: &HyperParams,
    cluster: &Cluster,
    steps: usize,
) -> Vec<ParamVector> {
    let mut state = OptimizerState::new(obj.initial_point(), cluster.k());
    (0..steps)
        .map(|t| {
            let batches = cluster.draw_batches(t);
            optimizers::step(method, &mut state, obj, cluster, &batches, hp, hp.lr_gamma).unwrap();
            state.x.clone()
        })
        .collect()
}

pub fn cluster(k: usize, b: usize, n: usize, seed: u64) -> Cluster {
    let mut cfg = ClusterConfig::new(k, b);
    cfg.master_seed = seed;
    Cluster::new(cfg, n, Parallelism::Sequential).unwrap()
}
