use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EstimateMode, ExperimentConfig, SeedSet};
use crate::affine::{estimate_affine, RoundRecord};
use crate::corruption::corrupt;
use crate::error::Result;
use crate::geometry::{
    match_rows, sample_body, tv_exact_axis_aligned, tv_monte_carlo, AxisBox, Cloud, Parallelopiped, SampleSet,
    TruthLabel, TvEstimate,
};
use crate::robust::WarmStartMode;
use crate::rotation::{estimate_rotation_from_sample, rotation_noise, RowNoise, RowStop};
use crate::shift_scale::{estimate_shift_scale, ShiftScaleStatus};

/// A generated problem: the true body and its corrupted, labeled sample.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: Parallelopiped,
    pub sample: SampleSet,
}

pub fn resolve_truth(cfg: &ExperimentConfig) -> Result<Parallelopiped> {
    cfg.truth.build(cfg.d, cfg.seeds().truth)
}

pub fn generate_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.validate()?;
    let truth = resolve_truth(cfg)?;
    let clean = sample_body(&truth, cfg.n, cfg.seeds().sample)?;
    let sample = corrupt(&clean, &truth, &cfg.corruption_spec())?;
    Ok(Instance { truth, sample })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub steps: usize,
    pub stop: RowStop,
    pub best_t: usize,
    pub start_escape: usize,
    pub best_escape: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Diagnostics {
    ShiftScale {
        initial_box: AxisBox,
        status: ShiftScaleStatus,
        certified: bool,
        iterations: usize,
        boundary_updates: usize,
        deletion_events: usize,
        deleted: usize,
    },
    Rotation {
        warm_start: Vec<Vec<f64>>,
        rows: Vec<RowSummary>,
    },
    Affine {
        best_round: usize,
        round_cap: usize,
        stopped_early: bool,
        warm_start: Vec<Vec<f64>>,
        robust_mean: Vec<f64>,
        robust_covariance: Vec<Vec<f64>>,
        rounds: Vec<RoundRecord>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub mode: EstimateMode,
    pub eps: f64,
    pub body: Parallelopiped,
    pub diagnostics: Diagnostics,
    /// Rows removed by the shift-and-scale deletions.
    #[serde(skip)]
    pub deleted: Vec<usize>,
}

/// Runs the estimator for `mode` on the points alone. `oracle_truth` is
/// read only by the oracle warm start.
pub fn estimate(
    cloud: &Cloud,
    cfg: &ExperimentConfig,
    oracle_truth: Option<&Parallelopiped>,
    seeds: &SeedSet,
) -> Result<EstimateOutput> {
    let eps = cfg.estimator_eps();
    let est = &cfg.estimator;
    let oracle = if est.warm_start.mode == WarmStartMode::Oracle { oracle_truth } else { None };
    match cfg.mode {
        EstimateMode::ShiftScale => {
            let o = estimate_shift_scale(cloud, eps, &est.shift_scale)?;
            let deleted = o.state.deleted_indices();
            Ok(EstimateOutput {
                mode: cfg.mode,
                eps,
                body: o.estimate.to_parallelopiped(),
                diagnostics: Diagnostics::ShiftScale {
                    initial_box: o.state.initial_box.clone(),
                    status: o.status,
                    certified: o.certified,
                    iterations: o.state.iteration,
                    boundary_updates: o.state.updates.len(),
                    deletion_events: o.state.deletions.len(),
                    deleted: deleted.len(),
                },
                deleted,
            })
        }
        EstimateMode::Rotation => {
            let o = estimate_rotation_from_sample(
                cloud,
                eps,
                &est.rotation,
                &est.filter,
                &est.warm_start,
                oracle,
                seeds.warm_start,
            )?;
            let rows = o
                .trace
                .rows
                .iter()
                .map(|r| RowSummary {
                    steps: r.steps.len(),
                    stop: r.stop,
                    best_t: r.best_t,
                    start_escape: r.start_escape,
                    best_escape: r.best_escape,
                })
                .collect();
            Ok(EstimateOutput {
                mode: cfg.mode,
                eps,
                body: o.body,
                diagnostics: Diagnostics::Rotation { warm_start: o.warm_start, rows },
                deleted: Vec::new(),
            })
        }
        EstimateMode::Affine => {
            let o = estimate_affine(cloud, eps, est, oracle, seeds.warm_start)?;
            Ok(EstimateOutput {
                mode: cfg.mode,
                eps,
                body: o.body,
                diagnostics: Diagnostics::Affine {
                    best_round: o.best_round,
                    round_cap: o.round_cap,
                    stopped_early: o.stopped_early,
                    warm_start: o.warm_start,
                    robust_mean: o.robust_mean,
                    robust_covariance: o.robust_covariance,
                    rounds: o.rounds,
                },
                deleted: Vec::new(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub inliers: usize,
    pub outliers: usize,
    pub deleted_by_adversary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEvaluation {
    pub round: usize,
    pub row_errors: Vec<f64>,
    pub bound_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhaseEvaluation {
    ShiftScale {
        deleted: usize,
        deleted_outliers: usize,
    },
    Rotation {
        rows: Vec<RowNoise>,
    },
    /// Round 0 is the warm start (row errors only).
    Affine {
        rounds: Vec<RoundEvaluation>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tv: TvEstimate,
    /// Exact TV when both bodies are axis-aligned boxes.
    pub tv_exact: Option<f64>,
    pub column_error: f64,
    /// `‖â_i − ±a_π(i)‖` per estimated row.
    pub row_errors: Vec<f64>,
    /// `(|û_i − u_i| + |v̂_i − v_i|)/(u_i − v_i)` per estimated row after matching.
    pub bound_errors: Vec<f64>,
    /// Active inliers outside the estimate, over active inliers.
    pub inlier_escape: f64,
    /// Outliers inside the estimate, over outliers.
    pub outliers_inside: f64,
    pub labels: LabelCounts,
    pub phase: PhaseEvaluation,
}

fn row_and_bound_errors(est: &Parallelopiped, truth: &Parallelopiped) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = match_rows(est.normals(), truth.normals())?;
    let bounds = m
        .perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (l, u) =
                if m.signs[i] > 0.0 { (est.lower()[i], est.upper()[i]) } else { (-est.upper()[i], -est.lower()[i]) };
            let (tl, tu) = (truth.lower()[j], truth.upper()[j]);
            ((u - tu).abs() + (l - tl).abs()) / (tu - tl)
        })
        .collect();
    Ok((m.errors, bounds))
}

/// Scores an estimate against the truth, reading the hidden labels.
pub fn evaluate(
    set: &SampleSet,
    truth: &Parallelopiped,
    est: &EstimateOutput,
    mc_budget: usize,
    tv_seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Evaluation> {
    let tv = tv_monte_carlo(&est.body, truth, mc_budget, tv_seed)?;
    let tv_exact = match (est.body.as_axis_box(), truth.as_axis_box()) {
        (Some(a), Some(b)) => Some(tv_exact_axis_aligned(&a, &b)?),
        _ => None,
    };
    let (row_errors, bound_errors) = row_and_bound_errors(&est.body, truth)?;
    let cloud = set.cloud();
    let mut labels = LabelCounts { inliers: 0, outliers: 0, deleted_by_adversary: 0 };
    let (mut escaped, mut inside) = (0usize, 0usize);
    for i in 0..cloud.len() {
        match set.labels()[i] {
            TruthLabel::Inlier => {
                labels.inliers += 1;
                if cloud.is_active(i) && !est.body.contains(cloud.point(i)) {
                    escaped += 1;
                }
            }
            TruthLabel::Outlier => {
                labels.outliers += 1;
                if est.body.contains(cloud.point(i)) {
                    inside += 1;
                }
            }
            TruthLabel::DeletedByAdversary => labels.deleted_by_adversary += 1,
        }
    }
    let phase = match &est.diagnostics {
        Diagnostics::ShiftScale { .. } => PhaseEvaluation::ShiftScale {
            deleted: est.deleted.len(),
            deleted_outliers: est.deleted.iter().filter(|&&i| set.labels()[i] == TruthLabel::Outlier).count(),
        },
        Diagnostics::Rotation { .. } => {
            PhaseEvaluation::Rotation { rows: rotation_noise(set, est.body.normals(), &cfg.estimator.rotation)? }
        }
        Diagnostics::Affine { warm_start, rounds, .. } => {
            let mut out = vec![RoundEvaluation {
                round: 0,
                row_errors: match_rows(warm_start, truth.normals())?.errors,
                bound_errors: Vec::new(),
            }];
            for r in rounds {
                let (row_errors, bound_errors) = row_and_bound_errors(&r.body, truth)?;
                out.push(RoundEvaluation { round: r.round, row_errors, bound_errors });
            }
            PhaseEvaluation::Affine { rounds: out }
        }
    };
    Ok(Evaluation {
        tv,
        tv_exact,
        column_error: row_errors.iter().sum(),
        row_errors,
        bound_errors,
        inlier_escape: escaped as f64 / labels.inliers.max(1) as f64,
        outliers_inside: inside as f64 / labels.outliers.max(1) as f64,
        labels,
        phase,
    })
}

/// Wall-clock milliseconds per phase; excluded from replay comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub generate_ms: f64,
    pub estimate_ms: f64,
    pub evaluate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seeds: SeedSet,
    pub truth: Parallelopiped,
    pub estimate: EstimateOutput,
    pub evaluation: Evaluation,
    pub timings: Timings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let t = Instant::now();
    let inst = generate_instance(cfg)?;
    let generate_ms = ms(t);
    let seeds = cfg.seeds();
    let t = Instant::now();
    let est = estimate(inst.sample.cloud(), cfg, Some(&inst.truth), &seeds)?;
    let estimate_ms = ms(t);
    let t = Instant::now();
    let evaluation = evaluate(&inst.sample, &inst.truth, &est, cfg.estimator.mc_budget, seeds.tv, cfg)?;
    let evaluate_ms = ms(t);
    Ok(RunReport {
        config: cfg.clone(),
        seeds,
        truth: inst.truth,
        estimate: est,
        evaluation,
        timings: Timings { generate_ms, estimate_ms, evaluate_ms },
    })
}

/// The report with timings zeroed, for replay comparison.
pub fn without_timings(r: &RunReport) -> RunReport {
    RunReport { timings: Timings::default(), ..r.clone() }
}

/// Re-runs the embedded config; returns the fresh report and whether its
/// serialized form, timings aside, matches the stored one exactly.
pub fn replay(report: &RunReport) -> Result<(RunReport, bool)> {
    let fresh = run_experiment(&report.config)?;
    let a = serde_json::to_string(&without_timings(&fresh));
    let b = serde_json::to_string(&without_timings(report));
    let same = matches!((a, b), (Ok(a), Ok(b)) if a == b);
    Ok((fresh, same))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TruthSpec;

    fn box_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(2, 20_000);
        cfg.truth = TruthSpec::ShiftScale { lower: None, upper: None, max_center: 2.0, side_range: [0.5, 4.0] };
        cfg.mode = EstimateMode::ShiftScale;
        cfg.corruption.epsilon = 0.05;
        cfg.estimator.mc_budget = 50_000;
        cfg.master_seed = 17;
        cfg
    }

    #[test]
    fn shift_scale_run_is_close_and_replays() {
        let cfg = box_config();
        let rep = run_experiment(&cfg).unwrap();
        let exact = rep.evaluation.tv_exact.unwrap();
        assert!(exact < 0.2, "tv_exact {exact}");
        assert!(replay(&rep).unwrap().1);
        let json = serde_json::to_string(&rep).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert!(replay(&back).unwrap().1);
    }

    #[test]
    fn estimate_ignores_labels() {
        let cfg = box_config();
        let inst = generate_instance(&cfg).unwrap();
        let seeds = cfg.seeds();
        let a = estimate(inst.sample.cloud(), &cfg, None, &seeds).unwrap();
        let stripped = SampleSet::unlabeled(inst.sample.cloud().clone());
        let b = estimate(stripped.cloud(), &cfg, None, &seeds).unwrap();
        assert_eq!(a, b);
    }
}
