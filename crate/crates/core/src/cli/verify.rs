//! Built-in theory suite behind `extrap verify`.

use serde::Serialize;

use crate::cluster::ClusterConfig;
use crate::error::Result;
use crate::harness::{run, RunConfig, RunResult};
use crate::objectives::{Hessian, InitialPoint, ObjectiveKind, ObjectiveSpec, Shifts};
use crate::optimizers::{HyperParams, Method, NoiseKind, NoiseSpec};
use crate::par::Parallelism;
use crate::theory::{self, Verdict};

/// Minimum fraction of trials on which a stochastic inequality must hold.
pub const PASS_RATE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

impl VerifyCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            detail: detail.into(),
            passed,
        }
    }
}

/// 8-dimensional quadratic with spectrum 0.5..4 and Gaussian shifts.
pub fn builtin_quadratic() -> ObjectiveSpec {
    ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal {
                diag: (1..=8).map(|i| 0.5 * i as f64).collect(),
            },
            shifts: Shifts::Gaussian { std: 1.0 },
        },
        dimension: 8,
        sample_count: 256,
        generator_seed: 7,
        block_sizes: Some(vec![4, 4]),
        initial_point: InitialPoint::Explicit { values: vec![2.0; 8] },
    }
}

pub fn builtin_config(method: Method, hp: HyperParams, k: usize, b: usize, t: usize, trials: usize) -> RunConfig {
    RunConfig {
        objective: builtin_quadratic(),
        cluster: ClusterConfig::new(k, b),
        method,
        hyperparams: hp,
        schedule: None,
        total_steps_t: t,
        record_every: t,
        record_virtual_sequence: true,
        record_smoothness_every: 0,
        trials,
        master_seed: 2024,
        probe_budget: 256,
    }
}

fn rate(result: &RunResult, pred: impl Fn(&crate::harness::TrialTheory) -> bool) -> (usize, usize) {
    let n = result.trials.len();
    let hits = result
        .trials
        .iter()
        .filter(|t| t.theory.as_ref().is_some_and(&pred))
        .count();
    (hits, n)
}

fn rate_check(name: &str, (hits, n): (usize, usize)) -> VerifyCheck {
    VerifyCheck::new(
        name,
        hits as f64 >= PASS_RATE * n as f64,
        format!("{hits}/{n} trials"),
    )
}

fn bitwise_check(name: &str, a: &RunConfig, b: &RunConfig, par: Parallelism) -> Result<VerifyCheck> {
    let (ra, rb) = (run(a, par)?, run(b, par)?);
    let equal = ra
        .trials
        .iter()
        .zip(&rb.trials)
        .all(|(x, y)| x.final_state.x.bit_eq(&y.final_state.x) && x.grad_norm2.len() == y.grad_norm2.len());
    Ok(VerifyCheck::new(
        name,
        equal,
        format!("{} steps, final iterates bitwise {}", a.total_steps_t, if equal { "equal" } else { "different" }),
    ))
}

/// Runs the descent-identity, proximity, rate-bound and reduction-chain
/// checks on [`builtin_quadratic`].
pub fn verify_suite(par: Parallelism) -> Result<Vec<VerifyCheck>> {
    let mut checks = Vec::new();
    let u = 0.9;
    let noise = Method::ExtrapNoise(NoiseSpec::new(NoiseKind::IsotropicGaussian, 0.1));

    for method in [Method::Sgd, Method::Nesterov, Method::ExtrapSgd, noise.clone()] {
        let cfg = builtin_config(method.clone(), HyperParams::new(0.01, u), 4, 8, 500, 2);
        let res = run(&cfg, par)?;
        let worst = res
            .trials
            .iter()
            .flat_map(|t| t.descent_residuals.iter().cloned())
            .fold(0.0, f64::max);
        checks.push(VerifyCheck::new(
            format!("descent identity: {}", method.name()),
            worst <= crate::harness::DESCENT_TOLERANCE,
            format!("max relative residual {worst:.3e}"),
        ));
    }

    let trials = 20;
    let prox = run(&builtin_config(Method::ExtrapSgd, HyperParams::new(0.01, u), 4, 8, 400, trials), par)?;
    checks.push(rate_check(
        "proximity: virtual distance (extrap-sgd)",
        rate(&prox, |t| t.proximity.virtual_distance.verdict == Verdict::Holds),
    ));
    checks.push(rate_check(
        "proximity: worker deviation (extrap-sgd)",
        rate(&prox, |t| t.proximity.worker_deviation.verdict == Verdict::Holds),
    ));
    let prox_noise = run(&builtin_config(noise, HyperParams::new(0.01, u), 4, 8, 400, trials), par)?;
    checks.push(rate_check(
        "proximity: worker deviation (iid noise)",
        rate(&prox_noise, |t| t.proximity.worker_deviation.verdict == Verdict::Holds),
    ));

    let t_horizon = 500;
    for method in [Method::Sgd, Method::Nesterov, Method::ExtrapSgd] {
        let probe = builtin_config(method.clone(), HyperParams::new(0.01, u), 4, 8, t_horizon, trials);
        let obj = probe.objective.build()?;
        let tc = crate::harness::run_constants(&probe, &obj)?;
        let gamma = theory::tune_stepsize(&method, &tc, &probe.hyperparams, &probe.cluster, t_horizon);
        let mut cfg = probe;
        cfg.hyperparams.lr_gamma = gamma;
        let res = run(&cfg, par)?;
        let (hits, n) = rate(&res, |t| t.rate_bound.asserted && t.rate_bound.holds);
        let mut c = rate_check(&format!("rate bound: {}", method.name()), (hits, n));
        c.detail = format!("{} at tuned lr {gamma:.4e}", c.detail);
        checks.push(c);
    }

    let t = 200;
    let sgd = builtin_config(Method::Sgd, HyperParams::new(0.05, 0.0), 4, 8, t, 2);
    let mut nesterov_u0 = sgd.clone();
    nesterov_u0.method = Method::Nesterov;
    checks.push(bitwise_check("reduction: nesterov(u=0) == sgd", &nesterov_u0, &sgd, par)?);

    let nesterov = builtin_config(Method::Nesterov, HyperParams::new(0.05, u), 4, 8, t, 2);
    let mut extrap0 = nesterov.clone();
    extrap0.method = Method::ExtrapSgd;
    extrap0.hyperparams.inner_lr_gamma_hat = Some(0.0);
    checks.push(bitwise_check("reduction: extrap-sgd(gamma_hat=0) == nesterov", &extrap0, &nesterov, par)?);

    let mut adam = builtin_config(Method::Adam, HyperParams::new(0.01, 0.0), 4, 8, t, 2);
    adam.record_virtual_sequence = false;
    let mut extrap_adam0 = adam.clone();
    extrap_adam0.method = Method::ExtrapAdam {
        extrap_denominator_sqrt: false,
    };
    extrap_adam0.hyperparams.inner_lr_gamma_hat = Some(0.0);
    checks.push(bitwise_check("reduction: extrap-adam(gamma_hat=0) == adam", &extrap_adam0, &adam, par)?);

    Ok(checks)
}
