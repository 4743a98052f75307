//! Full affine recovery: whiten with robust moments, warm-start the facet
//! normals, then alternate box fitting along the current normals with
//! rotation refinement in the frame where the current box is the standard
//! cube.

use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::error::{invalid, Error, Result};
use crate::geometry::{AffineMap, AxisBox, Cloud, Parallelopiped};
use crate::linalg::{inv_sqrt_spd, mat_vec, rows_to_matrix};
use crate::robust::{robust_covariance, robust_mean, warm_start, WarmStartConfig, MAX_FILTER_EPS};
use crate::rotation::{estimate_rotation, RowStop};
use crate::shift_scale::{estimate_shift_scale, ShiftScaleStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineConfig {
    /// Stop once at least `(1 − c_stop·ε)·n` points are inside. Values with
    /// `c_stop·ε ≥ 1` stop after the first round.
    pub c_stop: f64,
    /// Round cap is `min(max_rounds, ⌈c_rounds·ln(d/ε)⌉)`.
    pub c_rounds: f64,
    pub max_rounds: usize,
}

impl Default for AffineConfig {
    fn default() -> Self {
        Self { c_stop: 2.0, c_rounds: 10.0, max_rounds: 10 }
    }
}

impl AffineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_stop >= 0.0 && self.c_rounds > 0.0) || self.max_rounds == 0 {
            return Err(invalid("affine constants must be positive"));
        }
        Ok(())
    }

    pub fn round_cap(&self, d: usize, eps: f64) -> usize {
        let theory = (self.c_rounds * (d as f64 / eps).ln()).ceil().max(1.0) as usize;
        theory.min(self.max_rounds)
    }
}

impl Parallelopiped {
    /// The image of this body under `map`.
    pub fn image_under(&self, map: &AffineMap) -> Result<Parallelopiped> {
        let inv = map
            .matrix()
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("affine map matrix is singular".into()))?;
        let inv_t = inv.transpose();
        let d = self.dim();
        let mut normals = Vec::with_capacity(d);
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for i in 0..d {
            let b = mat_vec(&inv_t, &self.normals()[i]);
            let r = crate::linalg::norm(&b);
            let off = crate::linalg::dot(&b, map.shift());
            normals.push(b.iter().map(|v| v / r).collect());
            lower.push((self.lower()[i] + off) / r);
            upper.push((self.upper()[i] + off) / r);
        }
        Parallelopiped::with_condition_bound(normals, lower, upper, f64::INFINITY)
    }
}

/// Centers by `mean` and whitens by `cov^{-1/2}`.
pub fn normalize_frame(cloud: &Cloud, mean: &[f64], cov: &[Vec<f64>]) -> Result<(Cloud, AffineMap)> {
    crate::error::check_dim(cloud.dim(), mean.len())?;
    let w = inv_sqrt_spd(&rows_to_matrix(cov))?;
    let shift: Vec<f64> = mat_vec(&w, mean).iter().map(|v| -v).collect();
    let map = AffineMap::new(w, shift)?;
    Ok((cloud.mapped(&map)?, map))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Body after the round, in input coordinates.
    pub body: Parallelopiped,
    pub inside_fraction: f64,
    pub shift_scale_status: Option<ShiftScaleStatus>,
    pub shift_scale_deletions: usize,
    pub rotation_steps: Vec<usize>,
    pub rotation_stops: Vec<RowStop>,
    /// Sub-component failures during the round.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineOutcome {
    pub body: Parallelopiped,
    pub best_round: usize,
    pub rounds: Vec<RoundRecord>,
    pub round_cap: usize,
    pub stopped_early: bool,
    /// Warm-start normals in input coordinates.
    pub warm_start: Vec<Vec<f64>>,
    pub robust_mean: Vec<f64>,
    pub robust_covariance: Vec<Vec<f64>>,
}

fn inside_fraction(cloud: &Cloud, body: &Parallelopiped) -> f64 {
    let rows = cloud.active_indices();
    let inside = rows.iter().filter(|&&i| body.contains(cloud.point(i))).count();
    inside as f64 / rows.len() as f64
}

/// Recovers a parallelopiped from an ε-corrupted sample of its uniform law.
pub fn estimate_affine(
    cloud: &Cloud,
    eps: f64,
    cfg: &EstimatorConfig,
    oracle_truth: Option<&Parallelopiped>,
    seed: u64,
) -> Result<AffineOutcome> {
    cfg.validate()?;
    let ss = &cfg.shift_scale;
    if !(eps >= ss.eps_min && eps <= ss.eps_max) {
        return Err(invalid(format!("eps {eps} outside [{}, {}]", ss.eps_min, ss.eps_max)));
    }
    let d = cloud.dim();
    let n = cloud.active_count();
    if n < ss.n_min(d, eps) {
        return Err(Error::TooFewPoints { needed: ss.n_min(d, eps), found: n });
    }
    let filter_eps = eps.min(MAX_FILTER_EPS * (1.0 - 1e-9));
    let mean = robust_mean(cloud, filter_eps, &cfg.filter)?.estimate;
    let cov = robust_covariance(cloud, filter_eps, &cfg.filter)?.matrix;
    let (z, frame) = normalize_frame(cloud, &mean, &cov)?;
    let back = frame.inverse()?;

    let ws_cfg = WarmStartConfig { assume_whitened: true, ..cfg.warm_start.clone() };
    let truth_z = oracle_truth.map(|t| t.image_under(&frame)).transpose()?;
    let ws = warm_start(&z, filter_eps, &ws_cfg, &cfg.filter, truth_z.as_ref(), seed)?;
    let mut normals = ws.normals.clone();
    let warm_x = Parallelopiped::with_condition_bound(normals.clone(), vec![-1.0; d], vec![1.0; d], f64::INFINITY)?
        .image_under(&back)?
        .normals()
        .to_vec();

    let cap = cfg.affine.round_cap(d, eps);
    let target = 1.0 - cfg.affine.c_stop * eps;
    let mut bounds = AxisBox::new(vec![-(3f64.sqrt()); d], vec![3f64.sqrt(); d])?;
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(cap);
    let mut best: Option<(f64, usize, Parallelopiped)> = None;
    let mut stopped_early = false;
    for round in 1..=cap {
        let mut failures = Vec::new();
        let proj = z.projected(&normals)?;
        let (ss_status, ss_deleted) = match estimate_shift_scale(&proj, eps, ss) {
            Ok(o) => {
                bounds = o.estimate.clone();
                (Some(o.status), o.state.deleted_count())
            }
            Err(e) => {
                failures.push(format!("shift_scale: {e}"));
                (None, 0)
            }
        };
        let fitted = Parallelopiped::with_condition_bound(
            normals.clone(),
            bounds.lower().to_vec(),
            bounds.upper().to_vec(),
            f64::INFINITY,
        )?;
        // Frame in which the fitted body is the standard cube.
        let to_cube = fitted.to_affine_map()?.inverse()?;
        let w = z.mapped(&to_cube)?;
        let identity: Vec<Vec<f64>> = Parallelopiped::standard(d).normals().to_vec();
        let (body_z, steps, stops) = match estimate_rotation(&w, eps, &cfg.rotation, &cfg.filter, &identity) {
            Ok(o) => {
                let steps = o.trace.rows.iter().map(|r| r.steps.len()).collect();
                let stops = o.trace.rows.iter().map(|r| r.stop).collect();
                (o.body.image_under(&to_cube.inverse()?)?, steps, stops)
            }
            Err(e) => {
                failures.push(format!("rotation: {e}"));
                (fitted, Vec::new(), Vec::new())
            }
        };
        normals = body_z.normals().to_vec();
        let inside = inside_fraction(&z, &body_z);
        let body_x = body_z.image_under(&back)?;
        rounds.push(RoundRecord {
            round,
            body: body_x.clone(),
            inside_fraction: inside,
            shift_scale_status: ss_status,
            shift_scale_deletions: ss_deleted,
            rotation_steps: steps,
            rotation_stops: stops,
            failures,
        });
        if best.as_ref().is_none_or(|(f, _, _)| inside > *f) {
            best = Some((inside, round, body_x));
        }
        if inside >= target {
            stopped_early = round < cap;
            break;
        }
    }
    let (_, best_round, body) = best.expect("at least one round runs");
    Ok(AffineOutcome {
        body,
        best_round,
        rounds,
        round_cap: cap,
        stopped_early,
        warm_start: warm_x,
        robust_mean: mean,
        robust_covariance: cov,
    })
}
