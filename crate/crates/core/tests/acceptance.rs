//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use extrap_core::cli::builtin_config;
use extrap_core::harness::{run, run_constants, speedup_study, RunConfig, TrialTheory};
use extrap_core::objectives::{Hessian, InitialPoint, ObjectiveKind, ObjectiveSpec, Shifts};
use extrap_core::optimizers::{
    lars_factor, HyperParams, Method, NoiseKind, NoiseSpec, PostLocalConfig, Schedule, ScheduleContext,
    ScheduleKind,
};
use extrap_core::par::Parallelism;
use extrap_core::seed::{self, Domain};
use extrap_core::theory::{self, smoothness_estimate, Verdict};
use extrap_core::ParamVector;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Check);

const PAR: Parallelism = Parallelism::Rayon;
const TRIALS: usize = 30;
const PASS_RATE: f64 = 0.95;

fn rate_ok(hits: usize, n: usize) -> bool {
    hits as f64 >= PASS_RATE * n as f64
}

fn count(cfg: &RunConfig, pred: impl Fn(&TrialTheory) -> bool) -> Result<(usize, usize), Box<dyn std::error::Error>> {
    let res = run(cfg, PAR)?;
    let hits = res.trials.iter().filter(|t| t.theory.as_ref().is_some_and(&pred)).count();
    Ok((hits, res.trials.len()))
}

fn ac1_reduction_chain() -> Check {
    let steps = 200;
    let mut details = Vec::new();
    let mut ok = true;
    for spec in common::all_objectives() {
        let obj = spec.build()?;
        let cluster = common::cluster(3, 4, obj.sample_count(), 99);
        let pairs: [(&str, Method, HyperParams, Method, HyperParams); 3] = [
            (
                "extrap-sgd(gamma_hat=0)==nesterov",
                Method::ExtrapSgd,
                HyperParams::new(0.01, 0.9).with_gamma_hat(0.0),
                Method::Nesterov,
                HyperParams::new(0.01, 0.9),
            ),
            (
                "nesterov(u=0)==sgd",
                Method::Nesterov,
                HyperParams::new(0.01, 0.0),
                Method::Sgd,
                HyperParams::new(0.01, 0.0),
            ),
            (
                "extrap-adam(gamma_hat=0)==adam",
                Method::ExtrapAdam {
                    extrap_denominator_sqrt: false,
                },
                HyperParams::new(0.001, 0.0).with_gamma_hat(0.0),
                Method::Adam,
                HyperParams::new(0.001, 0.0),
            ),
        ];
        for (name, ma, ha, mb, hb) in pairs {
            let a = common::iterates(&obj, &ma, &ha, &cluster, steps);
            let b = common::iterates(&obj, &mb, &hb, &cluster, steps);
            let first_diff = a.iter().zip(&b).position(|(x, y)| !x.bit_eq(y));
            if let Some(t) = first_diff {
                ok = false;
                details.push(format!("{} {name}: differs at step {t}", obj.kind_name()));
            }
        }
    }
    if ok {
        details.push(format!("3 reductions x 3 objectives bitwise equal over {steps} steps"));
    }
    Ok((ok, details.join("; ")))
}

fn ac2_descent_identity() -> Check {
    let mut worst_all = 0.0f64;
    let mut ok = true;
    let mut details = Vec::new();
    for spec in [common::small_quadratic(), common::tiny_mlp(60, 3)] {
        for method in [Method::Nesterov, Method::ExtrapSgd] {
            let mut cfg = common::config(spec.clone(), method.clone(), HyperParams::new(0.01, 0.9), 4, 8, 1000);
            cfg.record_virtual_sequence = true;
            cfg.record_every = 1000;
            cfg.trials = 2;
            let res = run(&cfg, PAR)?;
            for tr in &res.trials {
                let worst = tr.descent_residuals.iter().cloned().fold(0.0, f64::max);
                worst_all = worst_all.max(worst);
                if tr.aborted.is_some() || tr.descent_residuals.len() != 1000 || worst > 1e-8 {
                    ok = false;
                    details.push(format!("{} trial {}: residual {worst:.2e}", method.name(), tr.trial));
                }
            }
        }
    }
    details.push(format!("max relative residual {worst_all:.2e} (tol 1e-8)"));
    Ok((ok, details.join("; ")))
}

fn ac3_rate_bounds() -> Check {
    let t = 2000;
    let u = 0.9;
    let mut ok = true;
    let mut details = Vec::new();
    for method in [Method::Nesterov, Method::ExtrapSgd] {
        for k in [1, 4] {
            for b in [4, 16] {
                let mut cfg = builtin_config(method.clone(), HyperParams::new(0.01, u), k, b, t, TRIALS);
                let obj = cfg.objective.build()?;
                let tc = run_constants(&cfg, &obj)?;
                cfg.hyperparams.lr_gamma = theory::tune_stepsize(&method, &tc, &cfg.hyperparams, &cfg.cluster, t);
                let (hits, n) = count(&cfg, |th| th.rate_bound.asserted && th.rate_bound.holds)?;
                ok &= rate_ok(hits, n);
                details.push(format!("{} K={k} B={b}: {hits}/{n}", method.name()));
            }
        }
    }
    Ok((ok, details.join(", ")))
}

fn ac4_proximity() -> Check {
    let hp = HyperParams::new(0.01, 0.9);
    let extrap = builtin_config(Method::ExtrapSgd, hp.clone(), 4, 8, 400, TRIALS);
    let (vd, n1) = count(&extrap, |th| th.proximity.virtual_distance.verdict == Verdict::Holds)?;
    let (wd, n2) = count(&extrap, |th| th.proximity.worker_deviation.verdict == Verdict::Holds)?;
    let noise = Method::ExtrapNoise(NoiseSpec::new(NoiseKind::IsotropicGaussian, 0.1));
    let iid = builtin_config(noise, hp, 4, 8, 400, TRIALS);
    let (nd, n3) = count(&iid, |th| th.proximity.worker_deviation.verdict == Verdict::Holds)?;
    let ok = rate_ok(vd, n1) && rate_ok(wd, n2) && rate_ok(nd, n3);
    Ok((
        ok,
        format!("past-gradient {vd}/{n1}, worker deviation {wd}/{n2}, iid-noise worker deviation {nd}/{n3}"),
    ))
}

/// Quadratic with one stiff noiseless coordinate (curvature 1, fixing L) and
/// `dn` flat coordinates (curvature 0.1) carrying unit Gaussian shifts.
fn speedup_objective(dn: usize, n: usize, x0: f64) -> ObjectiveSpec {
    let mut rng = seed::stream(3, Domain::Data, &[]);
    let mut points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut p = vec![0.0];
            p.extend((0..dn).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            p
        })
        .collect();
    for j in 1..=dn {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        points.iter_mut().for_each(|p| p[j] -= mean);
    }
    let mut diag = vec![1.0];
    diag.extend(std::iter::repeat_n(0.1, dn));
    let mut x = vec![0.0];
    x.extend(std::iter::repeat_n(x0, dn));
    ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal { diag },
            shifts: Shifts::Explicit { points },
        },
        dimension: dn + 1,
        sample_count: n,
        generator_seed: 0,
        block_sizes: None,
        initial_point: InitialPoint::Explicit { values: x },
    }
}

fn ac5_speedup() -> Check {
    let t = 2000;
    let epsilon = 2.76e-4;
    let mut base = common::config(speedup_objective(40, 1024, 2.54), Method::Sgd, HyperParams::new(0.01, 0.0), 1, 1, t);
    base.trials = TRIALS;
    base.record_every = t;
    base.master_seed = 5;

    let obj = base.objective.build()?;
    let tc = run_constants(&base, &obj)?.with_horizon(t, epsilon);
    let crit = theory::critical_batch_size(&base.method, &tc, &base.hyperparams);

    // doubling pairs well inside each regime: upper end ≤ crit/4, lower end ≥ 4·crit
    let pow2 = |v: f64| 2usize.pow(v.log2().floor().max(0.0) as u32);
    let top_below = pow2(crit / 4.0);
    let below = [(top_below / 4, top_below / 2), (top_below / 2, top_below)];
    let above_lo = 2 * pow2(4.0 * crit - 1.0);
    let above = [(above_lo, 2 * above_lo)];
    if below[0].0 < 1 {
        return Ok((false, format!("critical KB estimate {crit:.1} leaves no room below")));
    }
    let mut kbs: Vec<usize> = below.iter().chain(&above).flat_map(|&(a, b)| [a, b]).collect();
    kbs.sort_unstable();
    kbs.dedup();
    let split = |kb: usize| if kb <= base.objective.sample_count { (1, kb) } else { (kb / 512, 512) };
    let kb_grid: Vec<(usize, usize)> = kbs.iter().map(|&kb| split(kb)).collect();
    let lr_grid: Vec<f64> = (-24..=2).map(|k| 2f64.powf(k as f64 / 4.0)).collect();

    let study = speedup_study(&base, &kb_grid, epsilon, Some(&lr_grid), PAR)?;
    let steps = |kb: usize| -> Option<f64> {
        study
            .rows
            .iter()
            .find(|r| r.global_batch == kb)
            .and_then(|r| r.steps_to_epsilon)
            .map(|s| s as f64)
    };
    let mut ok = true;
    let mut details = vec![format!("critical KB ~ {:.1}", study.critical_kb)];
    for &(a, b) in &below {
        match (steps(a), steps(b)) {
            (Some(sa), Some(sb)) => {
                let r = sa / sb;
                ok &= (1.6..=2.4).contains(&r);
                details.push(format!("KB {a}->{b}: {sa}/{sb} = {r:.2}"));
            }
            _ => {
                ok = false;
                details.push(format!("KB {a}->{b}: censored"));
            }
        }
    }
    for &(a, b) in &above {
        match (steps(a), steps(b)) {
            (Some(sa), Some(sb)) => {
                let r = sa / sb;
                ok &= r < 1.3;
                details.push(format!("KB {a}->{b}: {sa}/{sb} = {r:.2}"));
            }
            _ => {
                ok = false;
                details.push(format!("KB {a}->{b}: censored"));
            }
        }
    }
    Ok((ok, details.join(", ")))
}

fn ac6_smoothness() -> Check {
    let spec = ObjectiveSpec {
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal { diag: vec![1.0, 4.0] },
            shifts: Shifts::Explicit {
                points: vec![vec![0.0, 0.0]],
            },
        },
        dimension: 2,
        sample_count: 1,
        generator_seed: 0,
        block_sizes: None,
        initial_point: InitialPoint::Zeros,
    };
    let obj = spec.build()?;
    let top = smoothness_estimate(&obj, &ParamVector::from_vec(vec![0.7, -1.3]), &ParamVector::from_vec(vec![0.0, 1.0]))?;
    let exact = (top - 4.0).abs() <= 1e-9;

    let path = configs_dir().join("tinymlp_nesterov.json");
    let mut means = Vec::new();
    for method in [Method::ExtrapSgd, Method::Nesterov] {
        let mut cfg = RunConfig::load(&path)?;
        cfg.method = method;
        cfg.trials = 10;
        cfg.record_smoothness_every = 5;
        let res = run(&cfg, PAR)?;
        let all: Vec<f64> = res.trials.iter().flat_map(|t| t.smoothness.iter().cloned()).collect();
        means.push(all.iter().sum::<f64>() / all.len() as f64);
    }
    let ordered = means[0] <= means[1];
    Ok((
        exact && ordered,
        format!(
            "diag(1,4) top direction L = {top:.12}; TinyMLP mean L extrap-sgd {:.5} vs nesterov {:.5}",
            means[0], means[1]
        ),
    ))
}

fn ac7_protocol_formulas() -> Check {
    let s = Schedule {
        kind: ScheduleKind::WarmupThenStepDecay,
        base_lr: 0.1,
        scale_factor: 32.0,
        warmup_epochs: 5.0,
        decay_milestones: vec![0.5, 0.75],
        decay_factor: 10.0,
        warmup_steps_inverse_sqrt: 0,
    };
    let ctx = ScheduleContext {
        workers_k: 32,
        local_batch_b: 256,
        sample_count: 50_000,
        total_steps: 10_000,
    };
    let inc = s.warmup_increment(&ctx);
    let inc_ok = (inc - 3.1 / (5.0 * 50_000.0 / 8192.0)).abs() <= 1e-12;
    let post = s.lr_at(7600, &ctx);
    let post_ok = (post - s.peak() / 100.0).abs() <= 1e-12;
    let lars = lars_factor(&[2.0, 0.0], &[0.0, 4.0], 1.0, 0.0);
    let lars_ok = lars == 0.5;
    Ok((
        inc_ok && post_ok && lars_ok,
        format!("warmup increment {inc:.15}, post-decay lr {post:.6} (peak {}), LARS {lars}", s.peak()),
    ))
}

fn ac8_post_local() -> Check {
    let plc = PostLocalConfig {
        transition_step_t0: 10,
        local_steps_h: 4,
        reset_local_momentum: false,
    };
    let mut cfg = common::config(common::small_quadratic(), Method::PostLocal(plc), HyperParams::new(0.02, 0.8), 4, 2, 120);
    cfg.trials = 10;
    let res = run(&cfg, PAR)?;
    let (mut averaged, mut between, mut bad) = (0, 0, 0);
    for tr in &res.trials {
        for r in &tr.records {
            match r.worker_dispersion {
                Some(d) if r.averaged => {
                    averaged += 1;
                    bad += (d != 0.0) as usize;
                }
                Some(d) => {
                    between += 1;
                    bad += (d <= 0.0) as usize;
                }
                None => {}
            }
        }
    }
    let ok = bad == 0 && averaged > 0 && between > 0 && !res.any_aborted();
    Ok((ok, format!("{averaged} averaging steps, {between} local steps, {bad} violations over 10 seeds")))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ac9_determinism() -> Check {
    let tmp = tempfile::tempdir()?;
    let mut ok = true;
    let mut compared = 0;
    for name in ["quadratic_extrap_sgd.json", "tinymlp_nesterov.json"] {
        let cfg = configs_dir().join(name);
        let mut outs = Vec::new();
        for threads in ["1", "4"] {
            for rep in 0..2 {
                let out = tmp.path().join(format!("{name}-{threads}-{rep}"));
                let status = Command::new(env!("CARGO_BIN_EXE_extrap"))
                    .args(["--threads", threads, "run", "--config"])
                    .arg(&cfg)
                    .arg("--out")
                    .arg(&out)
                    .output()?
                    .status;
                ok &= status.success();
                outs.push(out);
            }
        }
        let trials = RunConfig::load(&cfg)?.trials;
        for i in 0..trials {
            let file = format!("trial_{i}.jsonl");
            let first = std::fs::read(outs[0].join(&file))?;
            for o in &outs[1..] {
                ok &= std::fs::read(o.join(&file))? == first;
                compared += 1;
            }
        }
    }
    Ok((ok, format!("{compared} trial-file comparisons across 1 and 4 threads")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 reduction chain", ac1_reduction_chain),
        ("AC2 virtual-sequence descent identity", ac2_descent_identity),
        ("AC3 rate bounds", ac3_rate_bounds),
        ("AC4 proximity inequalities", ac4_proximity),
        ("AC5 linear speedup and its limit", ac5_speedup),
        ("AC6 smoothness estimator", ac6_smoothness),
        ("AC7 protocol formulas", ac7_protocol_formulas),
        ("AC8 post-local dispersion", ac8_post_local),
        ("AC9 determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !passed as usize;
        println!(
            "{} {name} ({:.1}s): {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
