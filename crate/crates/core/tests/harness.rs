mod common;

use std::fs;

use extrap_core::harness::{
    aggregate_records, read_jsonl, run, speedup_study, steps_to_epsilon, sweep, write_run, GridAxis, RunConfig,
};
use extrap_core::optimizers::{HyperParams, Method};
use extrap_core::par::Parallelism;
use extrap_core::Error;
use serde_json::Value;

fn quad_config(method: Method, lr: f64, t: usize, trials: usize) -> RunConfig {
    let mut cfg = common::config(common::small_quadratic(), method, HyperParams::new(lr, 0.5), 2, 4, t);
    cfg.trials = trials;
    cfg
}

fn records_json(cfg: &RunConfig, par: Parallelism) -> String {
    let res = run(cfg, par).unwrap();
    serde_json::to_string(&res.trials.iter().map(|t| &t.records).collect::<Vec<_>>()).unwrap()
}

#[test]
fn equal_seeds_give_identical_records() {
    let mut cfg = quad_config(Method::ExtrapSgd, 0.01, 60, 3);
    cfg.record_smoothness_every = 7;
    let a = records_json(&cfg, Parallelism::Rayon);
    assert_eq!(a, records_json(&cfg, Parallelism::Rayon));
    assert_eq!(a, records_json(&cfg, Parallelism::Sequential));
    cfg.master_seed += 1;
    assert_ne!(a, records_json(&cfg, Parallelism::Rayon));
}

#[test]
fn trials_use_distinct_seeds() {
    let res = run(&quad_config(Method::Sgd, 0.01, 20, 4), Parallelism::Rayon).unwrap();
    let mut seeds: Vec<u64> = res.trials.iter().map(|t| t.seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), 4);
    assert_ne!(res.trials[0].final_loss, res.trials[1].final_loss);
}

#[test]
fn zero_stepsize_keeps_the_loss_constant() {
    for method in [Method::Sgd, Method::Nesterov, Method::ExtrapSgd] {
        let res = run(&quad_config(method, 0.0, 25, 1), Parallelism::Sequential).unwrap();
        let tr = &res.trials[0];
        assert!(tr.records.iter().all(|r| r.train_loss == tr.initial_loss));
    }
}

#[test]
fn nesterov_descends_on_every_trial() {
    let res = run(&quad_config(Method::Nesterov, 0.05, 100, 30), Parallelism::Rayon).unwrap();
    let descended = res.trials.iter().filter(|t| t.final_loss < t.initial_loss).count();
    assert_eq!(descended, 30);
}

#[test]
fn record_every_thins_but_keeps_the_last_step() {
    let mut cfg = quad_config(Method::Sgd, 0.01, 23, 1);
    cfg.record_every = 5;
    let res = run(&cfg, Parallelism::Sequential).unwrap();
    let steps: Vec<usize> = res.trials[0].records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 5, 10, 15, 20, 22]);
    assert_eq!(res.trials[0].grad_norm2.len(), 23);
}

#[test]
fn single_point_sweep_matches_run() {
    let cfg = quad_config(Method::Nesterov, 0.02, 40, 3);
    let axes = [GridAxis::parse("hyperparams.lr_gamma=0.02").unwrap()];
    let sw = sweep(&cfg, &axes, Parallelism::Rayon).unwrap();
    let res = run(&cfg, Parallelism::Rayon).unwrap();
    let losses: Vec<f64> = res.trials.iter().map(|t| t.final_loss).collect();
    let (mean, _) = extrap_core::harness::mean_std(&losses);
    assert_eq!(sw.points.len(), 1);
    assert_eq!(sw.points[0].final_loss_mean.to_bits(), mean.to_bits());
    assert!(!sw.best_on_boundary);
}

#[test]
fn sweep_flags_a_best_point_on_the_boundary() {
    let cfg = quad_config(Method::Sgd, 0.01, 40, 2);
    let axes = [GridAxis::parse("hyperparams.lr_gamma=0.0001,0.001,0.01").unwrap()];
    let sw = sweep(&cfg, &axes, Parallelism::Rayon).unwrap();
    assert_eq!(sw.best, Some(2));
    assert!(sw.best_on_boundary);
    assert_eq!(sw.boundary_axes, vec!["hyperparams.lr_gamma".to_string()]);
}

#[test]
fn sweep_across_the_stability_cap_penalizes_divergence() {
    // L = 3, so γ = 5 diverges
    let cfg = quad_config(Method::Sgd, 0.01, 400, 2);
    let axes = [
        GridAxis::parse("hyperparams.lr_gamma=0.01,0.1,5.0").unwrap(),
        GridAxis::parse("cluster.workers_k=1,2").unwrap(),
    ];
    let sw = sweep(&cfg, &axes, Parallelism::Rayon).unwrap();
    assert_eq!(sw.points.len(), 6);
    // first axis varies slowest
    assert_eq!(sw.points[1].coords, vec![0, 1]);
    for p in &sw.points[4..] {
        assert_eq!(p.aborted_trials, 2);
        assert_eq!(p.final_loss_mean, f64::INFINITY);
    }
    let best = sw.best.unwrap();
    assert!(sw.points[best].coords[0] < 2);
}

#[test]
fn sweep_validates_every_point_first() {
    let cfg = quad_config(Method::Sgd, 0.01, 10, 1);
    let axes = [GridAxis::parse("hyperparams.momentum_u=0.5,1.0").unwrap()];
    match sweep(&cfg, &axes, Parallelism::Sequential) {
        Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "hyperparams.momentum_u"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn noiseless_speedup_does_not_depend_on_batch_size() {
    let spec = common::quadratic(vec![0.5, 1.0, 2.0], 32, 0.0, 3);
    let cfg = common::config(spec, Method::Sgd, HyperParams::new(0.1, 0.0), 1, 1, 300);
    let lr = [0.1];
    let st = speedup_study(&cfg, &[(1, 1), (2, 4), (8, 4)], 1e-3, Some(&lr), Parallelism::Rayon).unwrap();
    let steps: Vec<Option<usize>> = st.rows.iter().map(|r| r.steps_to_epsilon).collect();
    assert!(steps[0].is_some());
    assert!(steps.iter().all(|s| *s == steps[0]));
    assert_eq!(st.rows[2].global_batch, 32);
}

#[test]
fn speedup_censors_unreached_targets() {
    let cfg = quad_config(Method::Sgd, 0.01, 20, 2);
    let st = speedup_study(&cfg, &[(2, 4)], 1e-30, Some(&[0.01, 0.02]), Parallelism::Rayon).unwrap();
    assert!(st.rows[0].censored);
    assert_eq!(st.rows[0].steps_to_epsilon, None);

    // a reached target really is reached, and not one step earlier
    let eps = 5.0;
    let st = speedup_study(&cfg, &[(2, 4)], eps, Some(&[0.05]), Parallelism::Rayon).unwrap();
    let s = st.rows[0].steps_to_epsilon.unwrap();
    let mut point = cfg.clone();
    point.hyperparams.lr_gamma = 0.05;
    let res = run(&point, Parallelism::Rayon).unwrap();
    let mean_at = |t: usize| res.trials.iter().map(|tr| tr.grad_norm2[t]).sum::<f64>() / 2.0;
    assert!(mean_at(s) <= eps);
    assert!((0..s).all(|t| mean_at(t) > eps));
    assert_eq!(steps_to_epsilon(&res, eps), Some(s));
}

#[test]
fn aggregate_is_recomputable_from_trial_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quad_config(Method::ExtrapSgd, 0.01, 30, 3);
    cfg.record_every = 4;
    let res = run(&cfg, Parallelism::Rayon).unwrap();
    write_run(dir.path(), &res, &[]).unwrap();

    let trials: Vec<_> = (0..3)
        .map(|i| read_jsonl(&dir.path().join(format!("trial_{i}.jsonl"))).unwrap())
        .collect();
    let expected = aggregate_records(&trials);
    let mut rdr = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["step", "lr", "trials", "train_loss_mean", "train_loss_std", "grad_norm2_mean", "grad_norm2_std"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), expected.len());
    for (row, e) in rows.iter().zip(&expected) {
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(row[0].parse::<usize>().unwrap(), e.step);
        assert_eq!(f(3), e.train_loss_mean);
        assert_eq!(f(4), e.train_loss_std);
        assert_eq!(f(5), e.grad_norm2_mean);
        assert_eq!(f(6), e.grad_norm2_std);
    }
}

#[test]
fn divergence_aborts_but_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&quad_config(Method::Sgd, 5.0, 2000, 1), Parallelism::Sequential).unwrap();
    assert!(res.any_aborted());
    let tr = &res.trials[0];
    assert!(tr.steps_completed() > 10 && tr.steps_completed() < 2000);
    let last = tr.records.last().unwrap();
    assert!(last.aborted.is_some());
    assert!(tr.records[..tr.records.len() - 1].iter().all(|r| r.train_loss.is_finite()));

    write_run(dir.path(), &res, &[]).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["aborted_trials"], serde_json::json!([0]));
    let back = read_jsonl(&dir.path().join("trial_0.jsonl")).unwrap();
    assert_eq!(back.len(), tr.records.len());
}

#[test]
fn overrides_are_applied_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let cfg = quad_config(Method::Nesterov, 0.01, 10, 2);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let overrides = vec!["hyperparams.lr_gamma=0.02".to_string(), "cluster.workers_k=3".to_string()];
    let loaded = RunConfig::load_with_overrides(&path, &overrides).unwrap();
    assert_eq!(loaded.hyperparams.lr_gamma, 0.02);
    assert_eq!(loaded.cluster.workers_k, 3);

    let res = run(&loaded, Parallelism::Rayon).unwrap();
    let out = dir.path().join("out");
    write_run(&out, &res, &overrides).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["overrides"][0], "hyperparams.lr_gamma=0.02");
    assert_eq!(manifest["config"]["hyperparams"]["lr_gamma"], 0.02);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["total_steps_T"], 10);
}

#[test]
fn validation_errors_name_the_dotted_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let cfg = quad_config(Method::ExtrapSgd, 0.01, 10, 1);
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let field_of = |ov: &str| match RunConfig::load_with_overrides(&path, &[ov.to_string()]) {
        Err(Error::InvalidConfig { field, .. }) => field,
        other => panic!("{ov}: expected config error, got {other:?}"),
    };
    assert_eq!(field_of("hyperparams.momentum_u=1.0"), "hyperparams.momentum_u");
    assert_eq!(field_of("cluster.workers_k=0"), "cluster.workers_k");
    assert_eq!(field_of("total_steps_T=0"), "total_steps_T");
    assert!(field_of("cluster.local_batch_b=100000").starts_with("cluster."));
}
