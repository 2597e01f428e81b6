mod common;

use approx::assert_relative_eq;
use extrap_core::cluster::ClusterConfig;
use extrap_core::harness::{run, RunConfig};
use extrap_core::objectives::{Hessian, InitialPoint, ObjectiveKind, ObjectiveSpec, Shifts, TheoryConstants};
use extrap_core::optimizers::{self, HyperParams, Method, NoiseKind, NoiseSpec, OptimizerState};
use extrap_core::par::Parallelism;
use extrap_core::theory::{
    self, build_virtual_sequence, check_descent_identity, critical_batch_size, extrap_bound,
    nesterov_bound, noise_bound, smoothness_estimate, stepsize_cap, tune_stepsize, Trajectory,
};
use extrap_core::{Error, ParamVector};
use proptest::prelude::*;

fn constants(l: f64, sigma2: f64, r0: f64, t: usize) -> TheoryConstants {
    TheoryConstants {
        lipschitz_l: l,
        variance_sigma2: sigma2,
        f_star: 0.0,
        r0,
        horizon_t: t,
        target_epsilon: 0.0,
        analytic: true,
    }
}

fn diag_quadratic(diag: Vec<f64>) -> ObjectiveSpec {
    let d = diag.len();
    ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal { diag },
            shifts: Shifts::Explicit { points: vec![vec![0.0; d]] },
        },
        dimension: d,
        sample_count: 1,
        generator_seed: 0,
        block_sizes: None,
        initial_point: InitialPoint::Zeros,
    }
}

fn theory_run(spec: ObjectiveSpec, method: Method, hp: HyperParams, t: usize) -> extrap_core::harness::TrialResult {
    let mut cfg = common::config(spec, method, hp, 3, 4, t);
    cfg.record_virtual_sequence = true;
    cfg.record_every = t;
    run(&cfg, Parallelism::Rayon).unwrap().trials.remove(0)
}

#[test]
fn virtual_sequence_starts_at_x0_and_satisfies_descent_identity() {
    let hp = HyperParams::new(0.01, 0.9);
    for spec in common::all_objectives() {
        for method in [
            Method::Sgd,
            Method::Nesterov,
            Method::ExtrapSgd,
            Method::ExtrapNoise(NoiseSpec::new(NoiseKind::IsotropicGaussian, 0.05)),
            Method::ExtrapNoise(NoiseSpec::new(NoiseKind::AnisotropicStochastic, 1.0)),
        ] {
            let res = theory_run(spec.clone(), method.clone(), hp.clone(), 300);
            let vs = res.virtual_sequence.as_ref().unwrap();
            assert!(vs.y_bar[0].bit_eq(&spec.build().unwrap().initial_point()));
            assert_eq!(res.descent_residuals.len(), 300);
            let worst = res.descent_residuals.iter().cloned().fold(0.0, f64::max);
            assert!(worst <= 1e-8, "{} on {:?}: {worst}", method.name(), spec.kind);
        }
    }
}

#[test]
fn virtual_sequence_oracle_on_scalar_extrap() {
    // hand-built ȳ from the definition for K = 1 on f = ½(x − 1)²
    let obj = ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Identity,
            shifts: Shifts::Explicit { points: vec![vec![1.0]] },
        },
        dimension: 1,
        sample_count: 1,
        generator_seed: 0,
        block_sizes: None,
        initial_point: InitialPoint::Explicit { values: vec![3.0] },
    }
    .build()
    .unwrap();
    let cluster = common::cluster(1, 1, 1, 0);
    let (gamma, gh, u) = (0.1, 0.05, 0.5);
    let hp = HyperParams::new(gamma, u).with_gamma_hat(gh);
    let mut state = OptimizerState::new(obj.initial_point(), 1);
    let mut traj = Trajectory::new(obj.initial_point());
    for t in 0..5 {
        let b = cluster.draw_batches(t);
        let tr = optimizers::step(&Method::ExtrapSgd, &mut state, &obj, &cluster, &b, &hp, gamma).unwrap();
        traj.push(&tr);
    }
    let (xh, xi) = optimizers::lookahead(&Method::ExtrapSgd, &state, &cluster, &hp, gamma).unwrap();
    traj.close(xh, xi);
    let vs = build_virtual_sequence(&traj, &hp, &Method::ExtrapSgd, 1).unwrap();

    let v = |p: &ParamVector| p.values()[0];
    for t in 1..=5 {
        let expected = (v(&traj.x_half[t]) - u * v(&traj.x_half[t - 1]) + gamma * u * v(&traj.g_half[t - 1])
            + gh * (v(&traj.xi[t]) - u * v(&traj.xi[t - 1])))
            / (1.0 - u);
        assert_relative_eq!(v(&vs.y_bar[t]), expected, epsilon = 1e-14);
    }
    assert!(check_descent_identity(&vs).iter().all(|r| *r <= 1e-14));
}

#[test]
fn virtual_sequence_needs_the_final_lookahead() {
    let obj = common::small_quadratic().build().unwrap();
    let cluster = common::cluster(2, 2, obj.sample_count(), 0);
    let hp = HyperParams::new(0.01, 0.5);
    let mut state = OptimizerState::new(obj.initial_point(), 2);
    let mut traj = Trajectory::new(obj.initial_point());
    let b = cluster.draw_batches(0);
    traj.push(&optimizers::step(&Method::Nesterov, &mut state, &obj, &cluster, &b, &hp, 0.01).unwrap());
    assert!(matches!(
        build_virtual_sequence(&traj, &hp, &Method::Nesterov, 2),
        Err(Error::MissingRecord(_))
    ));
    assert!(build_virtual_sequence(&traj, &hp, &Method::Adam, 2).is_err());
}

#[test]
fn bound_formulas() {
    let tc = constants(2.0, 3.0, 5.0, 100);
    let (g, gh, u, b, k, t) = (0.01, 0.002, 0.5, 4usize, 2usize, 100usize);
    let l = 2.0;
    let s2 = 3.0;
    let r0 = 5.0;
    let om = 1.0 - u;

    let nest = (om * r0 / (g * t as f64) + g * l / (2.0 * om * om) * s2 / (b * k) as f64)
        / (1.0 - l * g * (u * u * u + 1.0) / (2.0 * om * om));
    assert_relative_eq!(nesterov_bound(&tc, g, u, b, k, t), nest, max_relative = 1e-14);

    let ext = 2.0 * om * r0 / (g * t as f64)
        + (4.0 * gh * gh * l * l / b as f64 + g * l * (1.0 + 3.0 * u) / (om * om * (b * k) as f64)) * s2;
    assert_relative_eq!(extrap_bound(&tc, g, gh, u, b, k, t), ext, max_relative = 1e-14);

    let sh2 = 0.7;
    let noise = 2.0 * om * r0 / (g * t as f64)
        + g * l * (1.0 + u) * s2 / (om * om * (b * k) as f64)
        + (l * l + om * om * l / (g * u * u * u * k as f64)) * 2.0 * gh * gh * t as f64 * sh2;
    assert_relative_eq!(noise_bound(&tc, g, gh, u, sh2, b, k, t), noise, max_relative = 1e-14);

    assert_relative_eq!(stepsize_cap(&Method::Nesterov, l, u), 2.0 * om * om / (l * (u * u * u + 1.0)), max_relative = 1e-15);
    assert_relative_eq!(stepsize_cap(&Method::Sgd, l, 0.0), 2.0 / l, max_relative = 1e-15);
    assert_relative_eq!(
        stepsize_cap(&Method::ExtrapSgd, l, u),
        om * om / (l * (1.0 + 3.0 * u + u * u * u)),
        max_relative = 1e-15
    );
    let iid = Method::ExtrapNoise(NoiseSpec::new(NoiseKind::IsotropicGaussian, 1.0));
    assert_relative_eq!(stepsize_cap(&iid, l, u), om * om / (l * (1.0 + u + u * u * u)), max_relative = 1e-15);
}

#[test]
fn nesterov_bound_is_infinite_past_the_cap() {
    let tc = constants(1.0, 1.0, 1.0, 10);
    let cap = stepsize_cap(&Method::Nesterov, 1.0, 0.5);
    assert!(nesterov_bound(&tc, cap * 1.01, 0.5, 1, 1, 10).is_infinite());
}

#[test]
fn critical_batch_size_formulas() {
    let tc = constants(2.0, 8.0, 4.0, 1000);
    let base = 8.0 * 1000.0 / (2.0 * 4.0);
    let hp = HyperParams::new(0.1, 0.9);
    let u: f64 = 0.9;
    assert_relative_eq!(critical_batch_size(&Method::Sgd, &tc, &hp), base, max_relative = 1e-14);
    assert_relative_eq!(
        critical_batch_size(&Method::Nesterov, &tc, &hp),
        (1.0 - u) / (u.powi(3) + 1.0).powi(2) * base,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        critical_batch_size(&Method::ExtrapSgd, &tc, &hp),
        (19.0 * u + 1.0) * (1.0 - u) / (u.powi(3) + 3.0 * u + 1.0).powi(3) * base,
        max_relative = 1e-14
    );
}

#[test]
fn tune_stepsize_cases() {
    let cfg = ClusterConfig::new(2, 8);
    let hp = HyperParams::new(0.0, 0.5);
    // noise-limited: candidate binds
    let tc = constants(1.0, 100.0, 1.0, 10_000);
    let cand = (2.0 * 1.0 * 16.0 * 0.125 / (1.0 * 100.0 * 10_000.0_f64)).sqrt();
    assert_relative_eq!(tune_stepsize(&Method::Nesterov, &tc, &hp, &cfg, 10_000), cand, max_relative = 1e-14);
    let ext = cand * ((0.125 + 1.5 + 1.0) / (9.5 + 1.0_f64)).sqrt();
    assert_relative_eq!(tune_stepsize(&Method::ExtrapSgd, &tc, &hp, &cfg, 10_000), ext, max_relative = 1e-14);
    // σ² = 0: the cap binds
    let tc0 = constants(1.0, 0.0, 1.0, 100);
    assert_eq!(
        tune_stepsize(&Method::Nesterov, &tc0, &hp, &cfg, 100),
        stepsize_cap(&Method::Nesterov, 1.0, 0.5)
    );
}

#[test]
fn smoothness_on_diag_quadratic() {
    let obj = diag_quadratic(vec![1.0, 4.0]).build().unwrap();
    let x = ParamVector::from_vec(vec![0.3, -0.2]);
    let top = smoothness_estimate(&obj, &x, &ParamVector::from_vec(vec![0.0, 1.0])).unwrap();
    assert!((top - 4.0).abs() <= 1e-9);
    let low = smoothness_estimate(&obj, &x, &ParamVector::from_vec(vec![2.0, 0.0])).unwrap();
    assert!((low - 1.0).abs() <= 1e-9);
    assert!(matches!(
        smoothness_estimate(&obj, &x, &ParamVector::zeros(2)),
        Err(Error::ZeroDirection)
    ));
}

#[test]
fn smoothness_of_affine_objective_is_zero() {
    let obj = diag_quadratic(vec![0.0, 0.0]).build().unwrap();
    let l = smoothness_estimate(&obj, &ParamVector::zeros(2), &ParamVector::from_vec(vec![1.0, 1.0])).unwrap();
    assert_eq!(l, 0.0);
}

#[test]
fn proximity_checks_on_a_run() {
    let hp = HyperParams::new(0.005, 0.9);
    let res = theory_run(common::small_quadratic(), Method::ExtrapSgd, hp.clone(), 300);
    let th = res.theory.unwrap();
    assert_eq!(th.proximity.virtual_distance.verdict, theory::Verdict::Holds);
    assert_eq!(th.proximity.worker_deviation.verdict, theory::Verdict::Holds);

    // above the inner-stepsize precondition the check is not asserted
    let big = hp.with_gamma_hat(10.0);
    let res = theory_run(common::small_quadratic(), Method::ExtrapSgd, big, 5);
    let th = res.theory.unwrap();
    assert_eq!(th.proximity.virtual_distance.verdict, theory::Verdict::NotApplicable);
    assert!(!th.rate_bound.asserted);
}

#[test]
fn rate_report_names_the_gradient_point() {
    let res = theory_run(common::small_quadratic(), Method::Nesterov, HyperParams::new(0.005, 0.5), 50);
    let rb = res.theory.unwrap().rate_bound;
    assert_eq!(rb.grad_point, "x_{t+1/2}");
    assert_eq!(rb.constants_used.horizon_t, 50);
    let res = theory_run(common::small_quadratic(), Method::ExtrapSgd, HyperParams::new(0.005, 0.5), 50);
    assert_eq!(res.theory.unwrap().rate_bound.grad_point, "mean_k x^k_{t+1/2}");
}

#[test]
fn theory_requires_a_constant_rate() {
    let mut cfg: RunConfig = common::config(common::small_quadratic(), Method::Nesterov, HyperParams::new(0.01, 0.5), 2, 2, 10);
    cfg.record_virtual_sequence = true;
    let mut s = extrap_core::optimizers::Schedule::constant(0.01);
    s.kind = extrap_core::optimizers::ScheduleKind::InverseSqrt;
    cfg.schedule = Some(s);
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { field, .. }) if field == "schedule"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tuned_stepsize_never_exceeds_cap(
        which in 0usize..4,
        l in 1e-3f64..100.0,
        s2 in 0.0f64..100.0,
        r0 in 0.0f64..100.0,
        u in 0.0f64..0.99,
        k in 1usize..64,
        b in 1usize..256,
        t in 1usize..100_000,
    ) {
        let method = [
            Method::Sgd,
            Method::Nesterov,
            Method::ExtrapSgd,
            Method::ExtrapNoise(NoiseSpec::new(NoiseKind::IsotropicUniform, 1.0)),
        ][which].clone();
        let tc = constants(l, s2, r0, t);
        let hp = HyperParams::new(0.0, u);
        let uu = if which == 0 { 0.0 } else { u };
        let gamma = tune_stepsize(&method, &tc, &hp, &ClusterConfig::new(k, b), t);
        prop_assert!(gamma <= stepsize_cap(&method, l, uu));
        prop_assert!(gamma >= 0.0);
    }

    #[test]
    fn smoothness_is_within_spectrum(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 3),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
        x in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        prop_assume!(dir.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        // A = MᵀM is symmetric PSD
        let a: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| (0..3).map(|r| rows[r][i] * rows[r][j]).sum()).collect())
            .collect();
        let spec = ObjectiveSpec {
            kind: ObjectiveKind::Quadratic {
                hessian: Hessian::Dense { rows: a },
                shifts: Shifts::Explicit { points: vec![vec![0.0; 3]] },
            },
            dimension: 3,
            sample_count: 1,
            generator_seed: 0,
            block_sizes: None,
            initial_point: InitialPoint::Zeros,
        };
        let obj = spec.build().unwrap();
        let lmax = obj.estimate_constants(&obj.initial_point(), 1).unwrap().lipschitz_l;
        let est = smoothness_estimate(&obj, &ParamVector::from_vec(x), &ParamVector::from_vec(dir)).unwrap();
        prop_assert!(est >= 0.0);
        prop_assert!(est <= lmax * (1.0 + 1e-9) + 1e-12);
    }
}
