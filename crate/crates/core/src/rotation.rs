//! Row-by-row rotation recovery. Each row starts from a warm start and
//! follows robust-mean gradient steps on the set of points escaping its
//! band, filtering points that crowd the bands of rows already fixed. The
//! iterate with the fewest escaping points is kept.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{check_unit, slab_outside, Cloud, Parallelopiped, SampleSet, SlabSet, TruthLabel};
use crate::linalg::{distance, dot, norm, normalized};
use crate::robust::{robust_mean_of_rows, warm_start, FilterConfig, WarmStartConfig, MAX_FILTER_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationConfig {
    /// Band-intersection filter constant.
    pub c1: f64,
    /// Step size `β = c2·|S|/(‖μ̃‖²·n)`.
    pub c2: f64,
    pub beta_max: f64,
    /// Per-row cap; the budget is `min(⌈2¹²·d·ln d⌉, iteration_cap)`.
    pub iteration_cap: usize,
    /// Stop a row after this many steps without a new minimum escape count.
    pub patience: Option<usize>,
    /// Half-width of the band; points with `|x . a| > threshold` escape.
    pub threshold: f64,
    /// Slack of the candidate cache used to speed up band scans.
    pub cache_radius: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self {
            c1: 8.0,
            c2: 1.0 / 32.0,
            beta_max: 0.5,
            iteration_cap: 5000,
            patience: Some(500),
            threshold: 1.0,
            cache_radius: 0.02,
        }
    }
}

impl RotationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 >= 0.0 && self.beta_max >= 0.0) {
            return Err(invalid("rotation constants must be positive (c2 and beta_max may be 0)"));
        }
        if !(self.threshold > 0.0) || !(self.cache_radius >= 0.0) {
            return Err(invalid("rotation threshold must be positive"));
        }
        Ok(())
    }

    pub fn row_budget(&self, d: usize) -> usize {
        let theory = (4096.0 * d as f64 * (d as f64).ln()).ceil() as usize;
        theory.min(self.iteration_cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepFlag {
    Ok,
    /// Nothing escapes the band; the iterate is final.
    EmptySlab,
    /// Too few points for the filter; a plain mean was used.
    SmallSlab,
    /// The robust mean vanished; the iterate is unchanged.
    DegenerateMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdStep {
    pub a_next: Vec<f64>,
    pub beta: f64,
    pub mean: Vec<f64>,
    pub slab_size: usize,
    pub flag: StepFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// The iterate `a^t` the step started from.
    pub a: Vec<f64>,
    pub slab_size: usize,
    pub removed: usize,
    pub beta: f64,
    pub mean_norm: f64,
    /// Escape count `s^{t+1}` of the new iterate.
    pub escape_next: usize,
    pub flag: StepFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStop {
    EmptySlab,
    IterationCap,
    Patience,
    DegenerateMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTrace {
    pub start: Vec<f64>,
    pub start_escape: usize,
    pub steps: Vec<StepRecord>,
    /// Iterate after the final step.
    pub last: Vec<f64>,
    pub best: Vec<f64>,
    pub best_t: usize,
    pub best_escape: usize,
    pub stop: RowStop,
}

impl RowTrace {
    /// Iterate `a^t` for `t = 0..=steps.len()`.
    pub fn iterate(&self, t: usize) -> Option<&[f64]> {
        if t < self.steps.len() {
            Some(&self.steps[t].a)
        } else if t == self.steps.len() {
            Some(&self.last)
        } else {
            None
        }
    }

    /// Escape count `s^t` for `t = 0..=steps.len()`.
    pub fn escape(&self, t: usize) -> Option<usize> {
        match t {
            0 => Some(self.start_escape),
            _ => self.steps.get(t - 1).map(|s| s.escape_next),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrace {
    pub rows: Vec<RowTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationOutcome {
    pub body: Parallelopiped,
    pub trace: RotationTrace,
    pub warm_start: Vec<Vec<f64>>,
}

/// Indices escaping the band of `a`, found through a cached superset.
struct SlabCache {
    norms: Vec<f64>,
    a_ref: Vec<f64>,
    radius: f64,
    candidates: Vec<usize>,
}

impl SlabCache {
    fn new(cloud: &Cloud, radius: f64) -> Self {
        let norms = (0..cloud.len()).map(|i| norm(cloud.point(i))).collect();
        Self { norms, a_ref: Vec::new(), radius, candidates: Vec::new() }
    }

    fn slab(&mut self, cloud: &Cloud, a: &[f64], threshold: f64) -> SlabSet {
        if self.a_ref.is_empty() || distance(a, &self.a_ref) > self.radius {
            self.a_ref = a.to_vec();
            self.candidates = (0..cloud.len())
                .filter(|&i| {
                    cloud.is_active(i) && dot(cloud.point(i), a).abs() + self.norms[i] * self.radius > threshold
                })
                .collect();
        }
        let mut out = SlabSet::default();
        for &i in &self.candidates {
            let p = dot(cloud.point(i), a);
            if p > threshold {
                out.indices.push(i);
                out.signs.push(1);
            } else if p < -threshold {
                out.indices.push(i);
                out.signs.push(-1);
            }
        }
        out
    }
}

/// Escape masks of the rows already fixed.
struct FixedBands {
    masks: Vec<Vec<bool>>,
    sizes: Vec<usize>,
}

impl FixedBands {
    fn new(cloud: &Cloud, rows: &[Vec<f64>], threshold: f64) -> Result<Self> {
        let mut masks = Vec::with_capacity(rows.len());
        let mut sizes = Vec::with_capacity(rows.len());
        for r in rows {
            let s = slab_outside(cloud, r, threshold)?;
            let mut m = vec![false; cloud.len()];
            for &i in &s.indices {
                m[i] = true;
            }
            sizes.push(s.len());
            masks.push(m);
        }
        Ok(Self { masks, sizes })
    }

    /// Slab members crowding any fixed band, ascending.
    fn crowded(&self, slab: &SlabSet, n: usize, c1: f64) -> Vec<usize> {
        let mut removed: Vec<usize> = Vec::new();
        for (mask, &size) in self.masks.iter().zip(&self.sizes) {
            let inter: Vec<usize> = slab.indices.iter().copied().filter(|&i| mask[i]).collect();
            if inter.len() as f64 * n as f64 > 2.0 * c1 * slab.len() as f64 * size as f64 {
                removed.extend(inter);
            }
        }
        removed.sort_unstable();
        removed.dedup();
        removed
    }
}

/// Points to set aside before a step: those in the band of `a_current`
/// that also crowd the band of some fixed row.
pub fn band_intersection_filter(
    cloud: &Cloud,
    a_current: &[f64],
    fixed_rows: &[Vec<f64>],
    c1: f64,
    threshold: f64,
) -> Result<Vec<usize>> {
    let slab = slab_outside(cloud, a_current, threshold)?;
    let bands = FixedBands::new(cloud, fixed_rows, threshold)?;
    Ok(bands.crowded(&slab, cloud.active_count(), c1))
}

fn local_eps(eps: f64, n: usize, slab: usize) -> f64 {
    if slab == 0 || eps == 0.0 {
        return 0.0;
    }
    (eps * n as f64 / slab as f64).min(MAX_FILTER_EPS * (1.0 - 1e-9))
}

fn step_on_slab(
    cloud: &Cloud,
    a: &[f64],
    slab: &SlabSet,
    eps_local: f64,
    n: usize,
    cfg: &RotationConfig,
    filter: &FilterConfig,
) -> Result<GdStep> {
    let d = cloud.dim();
    if slab.is_empty() {
        return Ok(GdStep {
            a_next: a.to_vec(),
            beta: 0.0,
            mean: vec![0.0; d],
            slab_size: 0,
            flag: StepFlag::EmptySlab,
        });
    }
    let y = slab.symmetrized(cloud);
    let (mean, mut flag) = match robust_mean_of_rows(&y, d, eps_local, filter) {
        Ok(r) => (r.estimate, StepFlag::Ok),
        Err(Error::TooFewPoints { .. }) => {
            let mut m = vec![0.0; d];
            for x in y.chunks_exact(d) {
                m.iter_mut().zip(x).for_each(|(a, b)| *a += b);
            }
            m.iter_mut().for_each(|v| *v /= slab.len() as f64);
            (m, StepFlag::SmallSlab)
        }
        Err(e) => return Err(e),
    };
    let mn2 = dot(&mean, &mean);
    if mn2.sqrt() < 1e-9 {
        flag = StepFlag::DegenerateMean;
        return Ok(GdStep { a_next: a.to_vec(), beta: 0.0, mean, slab_size: slab.len(), flag });
    }
    let beta = (cfg.c2 * slab.len() as f64 / (mn2 * n as f64)).clamp(0.0, cfg.beta_max);
    let raw: Vec<f64> = a.iter().zip(&mean).map(|(x, m)| x - beta * m).collect();
    let a_next = match normalized(&raw) {
        Some(v) => v,
        None => {
            return Ok(GdStep { a_next: a.to_vec(), beta, mean, slab_size: slab.len(), flag: StepFlag::DegenerateMean })
        }
    };
    Ok(GdStep { a_next, beta, mean, slab_size: slab.len(), flag })
}

/// One robust gradient step from `a` over all active points.
pub fn robust_gd_step(
    cloud: &Cloud,
    a: &[f64],
    threshold: f64,
    eps_local: f64,
    cfg: &RotationConfig,
    filter: &FilterConfig,
) -> Result<GdStep> {
    check_dim(cloud.dim(), a.len())?;
    check_unit(a)?;
    let slab = slab_outside(cloud, a, threshold)?;
    step_on_slab(cloud, a, &slab, eps_local, cloud.active_count(), cfg, filter)
}

/// Improves one row starting at `a0`, filtering against `fixed_rows`, and
/// returns the iterate with the smallest escape count.
pub fn improve_row(
    cloud: &Cloud,
    a0: &[f64],
    fixed_rows: &[Vec<f64>],
    eps: f64,
    cfg: &RotationConfig,
    filter: &FilterConfig,
) -> Result<(Vec<f64>, RowTrace)> {
    cfg.validate()?;
    let d = cloud.dim();
    check_dim(d, a0.len())?;
    check_unit(a0)?;
    for r in fixed_rows {
        check_dim(d, r.len())?;
        check_unit(r)?;
    }
    let n = cloud.active_count();
    let bands = FixedBands::new(cloud, fixed_rows, cfg.threshold)?;
    let mut cache = SlabCache::new(cloud, cfg.cache_radius);
    let mut a = a0.to_vec();
    let mut slab = cache.slab(cloud, &a, cfg.threshold);
    let start_escape = slab.len();
    let (mut best, mut best_t, mut best_escape) = (a.clone(), 0usize, start_escape);
    let mut steps = Vec::new();
    let budget = cfg.row_budget(d);
    let mut stop = RowStop::IterationCap;
    for t in 0..budget {
        if slab.is_empty() {
            stop = RowStop::EmptySlab;
            break;
        }
        let removed = bands.crowded(&slab, n, cfg.c1);
        let kept = if removed.is_empty() {
            slab.clone()
        } else {
            let mut k = SlabSet::default();
            for (&i, &s) in slab.indices.iter().zip(&slab.signs) {
                if removed.binary_search(&i).is_err() {
                    k.indices.push(i);
                    k.signs.push(s);
                }
            }
            k
        };
        let step = step_on_slab(cloud, &a, &kept, local_eps(eps, n, kept.len()), n, cfg, filter)?;
        let next_slab = cache.slab(cloud, &step.a_next, cfg.threshold);
        steps.push(StepRecord {
            a: a.clone(),
            slab_size: slab.len(),
            removed: removed.len(),
            beta: step.beta,
            mean_norm: norm(&step.mean),
            escape_next: next_slab.len(),
            flag: step.flag,
        });
        if step.flag == StepFlag::DegenerateMean {
            stop = RowStop::DegenerateMean;
            break;
        }
        a = step.a_next;
        slab = next_slab;
        if slab.len() < best_escape {
            best_escape = slab.len();
            best = a.clone();
            best_t = t + 1;
        }
        if let Some(p) = cfg.patience {
            if t + 1 - best_t >= p {
                stop = RowStop::Patience;
                break;
            }
        }
    }
    if slab.is_empty() && stop == RowStop::IterationCap {
        stop = RowStop::EmptySlab;
    }
    let trace =
        RowTrace { start: a0.to_vec(), start_escape, steps, best: best.clone(), best_t, best_escape, stop, last: a };
    Ok((best, trace))
}

/// Recovers the rotation row by row from the given warm start.
pub fn estimate_rotation(
    cloud: &Cloud,
    eps: f64,
    cfg: &RotationConfig,
    filter: &FilterConfig,
    warm: &[Vec<f64>],
) -> Result<RotationOutcome> {
    cfg.validate()?;
    let d = cloud.dim();
    check_dim(d, warm.len())?;
    let mut fixed: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut rows = Vec::with_capacity(d);
    for a0 in warm {
        let (best, trace) = improve_row(cloud, a0, &fixed, eps, cfg, filter)?;
        fixed.push(best);
        rows.push(trace);
    }
    let body = Parallelopiped::with_condition_bound(
        fixed,
        vec![-cfg.threshold; d],
        vec![cfg.threshold; d],
        crate::geometry::DEFAULT_MAX_CONDITION,
    )?;
    Ok(RotationOutcome { body, trace: RotationTrace { rows }, warm_start: warm.to_vec() })
}

/// [`estimate_rotation`] with a warm start computed from the sample.
pub fn estimate_rotation_from_sample(
    cloud: &Cloud,
    eps: f64,
    cfg: &RotationConfig,
    filter: &FilterConfig,
    warm_cfg: &WarmStartConfig,
    oracle_truth: Option<&Parallelopiped>,
    seed: u64,
) -> Result<RotationOutcome> {
    let ws = warm_start(cloud, eps, warm_cfg, filter, oracle_truth, seed)?;
    estimate_rotation(cloud, eps, cfg, filter, &ws.normals)
}

/// Label-based noise accounting for one finished row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowNoise {
    /// Outliers left in the row's escape set after filtering, over n.
    pub eps_i: f64,
    /// Clean-origin points of the escape region lost to the adversary or the filter, over n.
    pub eta_i: f64,
    pub filter_removed: usize,
    pub filter_removed_outliers: usize,
}

/// Recomputes each row's escape set and filter at the final normals and
/// splits it by hidden label. Evaluation only.
pub fn rotation_noise(set: &SampleSet, normals: &[Vec<f64>], cfg: &RotationConfig) -> Result<Vec<RowNoise>> {
    let cloud = set.cloud();
    let n = cloud.active_count() as f64;
    let mut out = Vec::with_capacity(normals.len());
    for (i, a) in normals.iter().enumerate() {
        let slab = slab_outside(cloud, a, cfg.threshold)?;
        let bands = FixedBands::new(cloud, &normals[..i], cfg.threshold)?;
        let removed = bands.crowded(&slab, cloud.active_count(), cfg.c1);
        let mut outliers_left = 0usize;
        let mut removed_outliers = 0usize;
        for &r in &slab.indices {
            if set.labels()[r] == TruthLabel::Outlier {
                if removed.binary_search(&r).is_ok() {
                    removed_outliers += 1;
                } else {
                    outliers_left += 1;
                }
            }
        }
        let mut lost = 0usize;
        for r in 0..cloud.len() {
            match set.labels()[r] {
                TruthLabel::DeletedByAdversary => {
                    if dot(cloud.point(r), a).abs() > cfg.threshold {
                        lost += 1;
                    }
                }
                TruthLabel::Inlier => {
                    if removed.binary_search(&r).is_ok() {
                        lost += 1;
                    }
                }
                TruthLabel::Outlier => {}
            }
        }
        out.push(RowNoise {
            eps_i: outliers_left as f64 / n,
            eta_i: lost as f64 / n,
            filter_removed: removed.len(),
            filter_removed_outliers: removed_outliers,
        });
    }
    Ok(out)
}
