//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line (written straight to stderr so it shows without `--nocapture`) and
//! then asserts. Every tolerance is a named constant in its test.

mod common;

use std::io::Write as _;
use std::time::Instant;

use common::exact_truncated_stats;
use cuberobust::corruption::{corrupt, Adversary, CorruptionSpec};
use cuberobust::facts::{run_facts, FactsConfig};
use cuberobust::geometry::{
    match_rows, sample_body, sample_standard_cube, slab_outside, truncated_direction_stats, tv_exact_axis_aligned,
    tv_monte_carlo, AxisBox, Parallelopiped, SampleSet,
};
use cuberobust::harness::{
    estimate, generate_instance, replay, run_experiment, Diagnostics, EstimateMode, ExperimentConfig, RunReport,
    TruthSpec,
};
use cuberobust::linalg::{distance, dot, normalized};
use cuberobust::robust::{robust_mean, FilterConfig, WarmStartMode};
use cuberobust::rotation::{improve_row, RotationConfig, StepFlag};
use cuberobust::seed::{derive_seed, rng_from_seed};
use cuberobust::set_lemma::{run_lemma_suite, LemmaSuiteConfig};
use rand::Rng as _;
use rayon::prelude::*;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn verdict(criterion: u32, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "\ncriterion {criterion}: {} {detail} ({:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn box_truth() -> TruthSpec {
    TruthSpec::ShiftScale { lower: None, upper: None, max_center: 2.0, side_range: [0.5, 4.0] }
}

fn random_unit(d: usize, rng: &mut cuberobust::seed::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

fn means_nondecreasing(means: &[f64]) -> bool {
    means.windows(2).all(|w| w[0] <= w[1])
}

#[test]
fn criterion_1_shift_scale_recovery() {
    const D: usize = 4;
    const N: usize = 200_000;
    const SLACK: f64 = 0.02;
    let t = Instant::now();
    let adversaries = [
        Adversary::CornerShift { spread: 0.1 },
        Adversary::FarUniform { radius: 100.0 },
        Adversary::BandIntersection { multiplier: 1.5, k1: None, k2: None },
    ];
    let mut cells = Vec::new();
    for eps in [0.02, 0.05] {
        for adv in &adversaries {
            for s in SEEDS {
                let mut cfg = ExperimentConfig::new(D, N);
                cfg.truth = box_truth();
                cfg.mode = EstimateMode::ShiftScale;
                cfg.corruption.epsilon = eps;
                cfg.corruption.adversary = adv.clone();
                cfg.estimator.mc_budget = 10_000;
                cfg.master_seed = s;
                cells.push(cfg);
            }
        }
    }
    let results: Vec<(f64, f64, &'static str)> = cells
        .par_iter()
        .map(|cfg| {
            let r = run_experiment(cfg).unwrap();
            (cfg.corruption.epsilon, r.evaluation.tv_exact.unwrap(), cfg.corruption.adversary.name())
        })
        .collect();
    let bad: Vec<_> = results.iter().filter(|(e, tv, _)| *tv > 4.0 * e + SLACK).collect();
    let worst = results.iter().map(|(e, tv, _)| tv - 4.0 * e).fold(f64::NEG_INFINITY, f64::max);
    let max_tv = results.iter().map(|r| r.1).fold(0.0, f64::max);
    verdict(
        1,
        bad.is_empty(),
        &format!(
            "{} runs, max tv_exact {max_tv:.4}, max tv - 4eps {worst:.4} (limit {SLACK}), failures {bad:?}",
            results.len()
        ),
        t,
    );
}

#[test]
fn criterion_2_rotation_improvement() {
    const D: usize = 3;
    const N: usize = 1_000_000;
    const DELTA: f64 = 0.1;
    const TARGET: f64 = 0.01;
    const GAIN_DIVISOR: f64 = 128.0;
    const EPS: f64 = 1e-3;
    const STARTS_PER_ROW: usize = 2;
    let t = Instant::now();
    let set = sample_standard_cube(D, N, 7).unwrap();
    let cfg = RotationConfig::default();
    let filter = FilterConfig::default();
    let runs: Vec<(usize, u64)> = (0..D).flat_map(|i| (0..STARTS_PER_ROW as u64).map(move |s| (i, s))).collect();
    let out: Vec<(usize, usize, f64)> = runs
        .par_iter()
        .map(|&(i, s)| {
            let e: Vec<f64> = (0..D).map(|j| if j == i { 1.0 } else { 0.0 }).collect();
            let mut rng = rng_from_seed(derive_seed(11, &format!("start{i}-{s}")));
            let mut w = random_unit(D, &mut rng);
            w[i] = 0.0;
            let w = normalized(&w).unwrap();
            // Chord distance DELTA from e.
            let th = 2.0 * (DELTA / 2.0).asin();
            let a0: Vec<f64> = (0..D).map(|j| th.cos() * e[j] + th.sin() * w[j]).collect();
            let (best, trace) = improve_row(set.cloud(), &a0, &[], EPS, &cfg, &filter).unwrap();
            let mut accepted = 0;
            let mut violations = 0;
            for (k, step) in trace.steps.iter().enumerate() {
                if step.flag != StepFlag::Ok {
                    continue;
                }
                accepted += 1;
                let a = &step.a;
                let next = trace.iterate(k + 1).unwrap();
                let gain = dot(next, &e) - dot(a, &e);
                if gain < step.beta * distance(a, &e) / GAIN_DIVISOR {
                    violations += 1;
                }
            }
            (accepted, violations, distance(&best, &e))
        })
        .collect();
    let accepted: usize = out.iter().map(|o| o.0).sum();
    let violations: usize = out.iter().map(|o| o.1).sum();
    let worst = out.iter().map(|o| o.2).fold(0.0, f64::max);
    verdict(
        2,
        violations == 0 && worst < TARGET,
        &format!("{accepted} accepted steps, {violations} below beta*delta/{GAIN_DIVISOR}; worst final distance {worst:.5} (limit {TARGET})"),
        t,
    );
}

#[test]
fn criterion_3_rotation_under_corruption() {
    const D: usize = 3;
    const N: usize = 200_000;
    const C_ROT_MAX: f64 = 64.0;
    const EPSILONS: [f64; 3] = [0.005, 0.01, 0.02];
    let t = Instant::now();
    let mut cells = Vec::new();
    for eps in EPSILONS {
        for adv in [Adversary::FarUniform { radius: 100.0 }, Adversary::CornerShift { spread: 0.1 }] {
            for s in SEEDS {
                let mut cfg = ExperimentConfig::new(D, N);
                cfg.truth = TruthSpec::Rotation { normals: None };
                cfg.mode = EstimateMode::Rotation;
                cfg.corruption.epsilon = eps;
                cfg.corruption.adversary = adv.clone();
                cfg.estimator.warm_start.mode = WarmStartMode::Oracle;
                cfg.estimator.warm_start.oracle_delta = 0.05;
                cfg.master_seed = s;
                cells.push(cfg);
            }
        }
    }
    let res: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|cfg| {
            let r = run_experiment(cfg).unwrap();
            (cfg.corruption.epsilon, r.evaluation.inlier_escape, r.evaluation.tv.estimate)
        })
        .collect();
    let c_rot = res.iter().map(|r| r.1 / r.0).fold(0.0, f64::max);
    let c_tv = res.iter().map(|r| r.2 / r.0).fold(0.0, f64::max);
    let mean = |k: usize, e: f64| {
        let v: Vec<f64> = res.iter().filter(|r| r.0 == e).map(|r| if k == 1 { r.1 } else { r.2 }).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let esc: Vec<f64> = EPSILONS.iter().map(|&e| mean(1, e)).collect();
    let tv: Vec<f64> = EPSILONS.iter().map(|&e| mean(2, e)).collect();
    let pass = c_rot <= C_ROT_MAX && means_nondecreasing(&esc) && means_nondecreasing(&tv);
    verdict(
        3,
        pass,
        &format!(
            "{} runs, fitted C_rot {c_rot:.3} (limit {C_ROT_MAX}), fitted C_tv {c_tv:.3}, mean escape {esc:.4?}, mean tv {tv:.4?}",
            res.len()
        ),
        t,
    );
}

/// Per-round chord distances indexed by truth row; round 0 is the warm start.
fn round_distances(report: &RunReport) -> Vec<Vec<f64>> {
    let Diagnostics::Affine { warm_start, rounds, .. } = &report.estimate.diagnostics else {
        panic!("affine diagnostics expected");
    };
    let truth = report.truth.normals();
    let mut rows: Vec<&[Vec<f64>]> = vec![warm_start];
    rows.extend(rounds.iter().map(|r| r.body.normals()));
    rows.iter()
        .map(|normals| {
            let m = match_rows(normals, truth).unwrap();
            let mut by_truth = vec![0.0; truth.len()];
            for (i, &j) in m.perm.iter().enumerate() {
                by_truth[j] = m.errors[i];
            }
            by_truth
        })
        .collect()
}

#[test]
fn criterion_4_full_affine_pipeline() {
    const N: usize = 200_000;
    const EPS: f64 = 0.02;
    const TV_EACH: f64 = 0.25;
    const TV_MEAN: f64 = 0.15;
    const MAX_ROUNDS: usize = 10;
    const CONTRACTION: f64 = 0.9;
    let t = Instant::now();
    let mut cells = Vec::new();
    for d in [2, 3] {
        for s in SEEDS {
            let mut cfg = ExperimentConfig::new(d, N);
            cfg.truth = TruthSpec::Affine { matrix: None, shift: None, condition: 5.0, max_shift: 2.0 };
            cfg.mode = EstimateMode::Affine;
            cfg.corruption.epsilon = EPS;
            cfg.master_seed = s;
            cells.push(cfg);
        }
    }
    struct Run {
        d: usize,
        seed: u64,
        tv: f64,
        rounds: usize,
        worst_ratio: f64,
        checked: usize,
    }
    let runs: Vec<Run> = cells
        .par_iter()
        .map(|cfg| {
            let rep = run_experiment(cfg).unwrap();
            // Noise floor: the same pipeline on the same sample from an exact start.
            let mut floor_cfg = cfg.clone();
            floor_cfg.estimator.warm_start.mode = WarmStartMode::Oracle;
            floor_cfg.estimator.warm_start.oracle_delta = 0.0;
            let floor_rep = run_experiment(&floor_cfg).unwrap();
            let floor: Vec<f64> =
                (0..cfg.d).map(|j| round_distances(&floor_rep).iter().map(|r| r[j]).fold(0.0, f64::max)).collect();
            let dist = round_distances(&rep);
            let (mut worst_ratio, mut checked) = (0.0f64, 0);
            for w in dist.windows(2) {
                for j in 0..cfg.d {
                    if w[0][j] > floor[j] {
                        checked += 1;
                        worst_ratio = worst_ratio.max(w[1][j] / w[0][j]);
                    }
                }
            }
            Run {
                d: cfg.d,
                seed: cfg.master_seed,
                tv: rep.evaluation.tv.estimate,
                rounds: dist.len() - 1,
                worst_ratio,
                checked,
            }
        })
        .collect();
    let mean_tv = runs.iter().map(|r| r.tv).sum::<f64>() / runs.len() as f64;
    let max_tv = runs.iter().map(|r| r.tv).fold(0.0, f64::max);
    let max_rounds = runs.iter().map(|r| r.rounds).max().unwrap();
    let contraction_fail: Vec<String> = runs
        .iter()
        .filter(|r| r.worst_ratio > CONTRACTION)
        .map(|r| format!("d{} s{} ratio {:.2} over {} checks", r.d, r.seed, r.worst_ratio, r.checked))
        .collect();
    let pass = max_tv <= TV_EACH && mean_tv <= TV_MEAN && max_rounds <= MAX_ROUNDS && contraction_fail.is_empty();
    verdict(
        4,
        pass,
        &format!(
            "max tv {max_tv:.4} (limit {TV_EACH}), mean tv {mean_tv:.4} (limit {TV_MEAN}), max rounds {max_rounds} (limit {MAX_ROUNDS}), \
             runs with a row ratio above {CONTRACTION} while above the floor: {contraction_fail:?}"
        ),
        t,
    );
}

#[test]
fn criterion_5_geometry_facts() {
    const SEED: u64 = 2024;
    let t = Instant::now();
    let cfg = FactsConfig::default();
    assert!(cfg.configs_per_fact >= 20 && cfg.mc_budget >= 1_000_000 && cfg.se_slack <= 3.0);
    assert_eq!(cfg.dims, vec![2, 5, 10]);
    let rep = run_facts(&cfg, SEED, &[]).unwrap();
    let summary: Vec<String> = rep
        .facts
        .iter()
        .filter(|f| f.asserted)
        .map(|f| {
            let failed = f.checks.iter().filter(|c| !c.holds).count();
            format!("{} {}/{}", f.name, f.checks.len() - failed, f.checks.len())
        })
        .collect();
    verdict(5, rep.passed(), &format!("checks within {} stderr: {}", cfg.se_slack, summary.join(", ")), t);
}

#[test]
fn criterion_6_set_system_bounds() {
    const APPLICABLE: usize = 10_000;
    let t = Instant::now();
    // Enough draws that each bound sees at least APPLICABLE applicable instances.
    let cfg = LemmaSuiteConfig { instances: 20_000, ..LemmaSuiteConfig::default() };
    let rep = run_lemma_suite(&cfg, 6).unwrap();
    let (a, b) = (&rep.intersection_sum, &rep.pairwise_expectation);
    let pass = rep.passed()
        && a.violations == 0
        && b.violations == 0
        && a.applicable >= APPLICABLE
        && b.applicable >= APPLICABLE;
    verdict(
        6,
        pass,
        &format!(
            "intersection sum: {} applicable, {} violations; pairwise expectation: {} applicable, {} violations",
            a.applicable, a.violations, b.applicable, b.violations
        ),
        t,
    );
}

#[test]
fn criterion_7_robust_mean_contract() {
    const D: usize = 4;
    const N: usize = 20_000;
    const C: f64 = 5.0;
    const RADIUS_TOL: f64 = 0.1;
    let t = Instant::now();
    let body = AxisBox::new(vec![-1.0, -2.0, 0.0, -0.5], vec![1.0, 2.0, 0.5, 3.0]).unwrap();
    let sides: Vec<f64> = (0..D).map(|i| body.side(i)).collect();
    let sigma_norm = sides.iter().map(|s| s * s / 12.0).fold(0.0, f64::max);
    let truth = body.to_parallelopiped();
    let center = body.center();
    let mut lines = Vec::new();
    let mut pass = true;
    for eps in [0.02, 0.1] {
        for s in [1u64, 2, 3] {
            let clean = sample_body(&truth, N, 100 + s).unwrap();
            let errs: Vec<f64> = [1e2, 1e4]
                .iter()
                .map(|&radius| {
                    let spec =
                        CorruptionSpec { epsilon: eps, adversary: Adversary::FarUniform { radius }, seed: 200 + s };
                    let set = corrupt(&clean, &truth, &spec).unwrap();
                    let r = robust_mean(set.cloud(), eps, &FilterConfig::default()).unwrap();
                    distance(&r.estimate, &center)
                })
                .collect();
            let bound = C * eps.sqrt() * sigma_norm.sqrt();
            let spread = (errs[0] - errs[1]).abs() / errs[0].max(errs[1]);
            pass &= errs.iter().all(|&e| e <= bound) && spread <= RADIUS_TOL;
            lines.push(format!("eps {eps} s{s}: {:.4}/{:.4} (bound {bound:.3}, spread {spread:.3})", errs[0], errs[1]));
        }
    }
    verdict(7, pass, &format!("errors at radius 1e2/1e4: {}", lines.join("; ")), t);
}

#[test]
fn criterion_8_oracle_equivalence() {
    const PAIRS: usize = 50;
    const CONFIGS: usize = 20;
    const M: usize = 1_000_000;
    const N: usize = 200_000;
    const Z: f64 = 3.0;
    let t = Instant::now();
    let tv_z: Vec<f64> = (0..PAIRS as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(8, &format!("pair{k}")));
            let d = rng.random_range(1..=5);
            let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..2.0)).collect();
            let lo2: Vec<f64> = lo.iter().map(|l| l + rng.random_range(-0.3..0.3)).collect();
            let hi2: Vec<f64> = hi.iter().map(|h| h + rng.random_range(-0.3..0.3)).collect();
            let (p, q) = (AxisBox::new(lo, hi).unwrap(), AxisBox::new(lo2, hi2).unwrap());
            let exact = tv_exact_axis_aligned(&p, &q).unwrap();
            let mc = tv_monte_carlo(&p.to_parallelopiped(), &q.to_parallelopiped(), M, 1000 + k).unwrap();
            (mc.estimate - exact).abs() / mc.stderr
        })
        .collect();
    let stat_z: Vec<(f64, f64)> = (0..CONFIGS as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(8, &format!("slab{k}")));
            let normals = vec![random_unit(2, &mut rng), random_unit(2, &mut rng)];
            let lower = vec![rng.random_range(-2.0..-0.5), rng.random_range(-2.0..-0.5)];
            let upper = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
            let body = Parallelopiped::new(normals, lower, upper).unwrap();
            let set: SampleSet = sample_body(&body, N, 2000 + k).unwrap();
            let a = random_unit(2, &mut rng);
            let v = random_unit(2, &mut rng);
            let reach = (0..set.len()).map(|i| dot(set.cloud().point(i), &a).abs()).fold(0.0, f64::max);
            let t = rng.random_range(0.0..0.7) * reach;
            let slab = slab_outside(set.cloud(), &a, t).unwrap();
            let (mean, var) = truncated_direction_stats(set.cloud(), &slab, &v).unwrap();
            let (em, ev) = exact_truncated_stats(&body, [a[0], a[1]], t, [v[0], v[1]]);
            let m = slab.len() as f64;
            let m4 = slab
                .indices
                .iter()
                .zip(&slab.signs)
                .map(|(&i, &s)| (s as f64 * dot(set.cloud().point(i), &v) - mean).powi(4))
                .sum::<f64>()
                / m;
            ((mean - em).abs() / (var / m).sqrt(), (var - ev).abs() / ((m4 - var * var) / m).sqrt())
        })
        .collect();
    let max_tv = tv_z.iter().copied().fold(0.0, f64::max);
    let max_mean = stat_z.iter().map(|z| z.0).fold(0.0, f64::max);
    let max_var = stat_z.iter().map(|z| z.1).fold(0.0, f64::max);
    verdict(
        8,
        max_tv <= Z && max_mean <= Z && max_var <= Z,
        &format!(
            "max |z|: tv {max_tv:.2} over {PAIRS} pairs, truncated mean {max_mean:.2} and variance {max_var:.2} over {CONFIGS} configs (limit {Z})"
        ),
        t,
    );
}

#[test]
fn criterion_9_replay_and_label_firewall() {
    let t = Instant::now();
    let mut cfgs = Vec::new();
    for (mode, truth, d) in [
        (EstimateMode::ShiftScale, box_truth(), 3),
        (EstimateMode::Rotation, TruthSpec::Rotation { normals: None }, 3),
        (EstimateMode::Affine, TruthSpec::default(), 2),
    ] {
        let mut cfg = ExperimentConfig::new(d, 60_000);
        cfg.truth = truth;
        cfg.mode = mode;
        cfg.corruption.epsilon = 0.05;
        cfg.estimator.mc_budget = 100_000;
        cfg.master_seed = 99;
        cfgs.push(cfg);
    }
    let mut notes = Vec::new();
    let mut pass = true;
    for cfg in &cfgs {
        let rep = run_experiment(cfg).unwrap();
        let stored: RunReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        let (_, same) = replay(&stored).unwrap();

        let inst = generate_instance(cfg).unwrap();
        let seeds = cfg.seeds();
        let labeled = estimate(inst.sample.cloud(), cfg, Some(&inst.truth), &seeds).unwrap();
        let stripped = SampleSet::unlabeled(inst.sample.cloud().clone());
        let blind = estimate(stripped.cloud(), cfg, Some(&inst.truth), &seeds).unwrap();
        let firewall = labeled == blind && labeled == rep.estimate;
        pass &= same && firewall;
        notes.push(format!("{}: replay {same}, labels stripped unchanged {firewall}", cfg.mode.name()));
    }
    verdict(9, pass, &notes.join("; "), t);
}
