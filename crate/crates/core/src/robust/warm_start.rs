use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::covariance::robust_covariance;
use super::filter::{robust_mean, FilterConfig};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{match_rows, Cloud, Parallelopiped};
use crate::linalg::{dot, inv_sqrt_spd, mat_vec, normalized, rows_to_matrix};
use crate::seed::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartMode {
    #[default]
    Moment,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartConfig {
    pub mode: WarmStartMode,
    /// Chord distance of each oracle row from its true row.
    pub oracle_delta: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Only the first `max_points` active rows drive the moment ascent.
    pub max_points: usize,
    /// Rows farther than `trim_radius·√(3d)` from the center of the
    /// whitened frame are dropped before the ascent (`√(3d)` is the
    /// circumradius of a whitened cube).
    pub trim_radius: f64,
    /// Skip internal whitening (input is already centered and whitened).
    pub assume_whitened: bool,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            mode: WarmStartMode::Moment,
            oracle_delta: 0.05,
            restarts: 4,
            max_iterations: 200,
            max_points: 50_000,
            trim_radius: 1.25,
            assume_whitened: false,
        }
    }
}

impl WarmStartConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.oracle_delta >= 0.0 && self.oracle_delta <= 2.0) {
            return Err(invalid("oracle_delta must lie in [0, 2]"));
        }
        if self.restarts == 0 || self.max_points == 0 {
            return Err(invalid("warm start needs at least one restart and one point"));
        }
        if !(self.trim_radius > 0.0) {
            return Err(invalid("trim_radius must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub normals: Vec<Vec<f64>>,
    pub mode: WarmStartMode,
    /// Squared inner products with the matched true rows, when the truth is known.
    pub per_row_alignment: Option<Vec<f64>>,
    pub converged: bool,
    /// Estimated `Σ_j w_j⁴` of each row in the whitened frame (1 at a facet normal).
    pub surrogate: Vec<f64>,
}

/// Empirical `E(u . x)⁴` over active rows and its standard error.
pub fn directional_fourth_moment(cloud: &Cloud, u: &[f64]) -> Result<(f64, f64)> {
    check_dim(cloud.dim(), u.len())?;
    let vals: Vec<f64> = cloud.active_indices().iter().map(|&i| dot(cloud.point(i), u).powi(4)).collect();
    if vals.is_empty() {
        return Err(Error::EmptySet("no active rows".into()));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, (var / n).sqrt()))
}

/// Squared inner product of each row with its matched true row.
pub fn alignment(normals: &[Vec<f64>], truth: &Parallelopiped) -> Result<Vec<f64>> {
    let m = match_rows(normals, truth.normals())?;
    Ok(m.perm.iter().enumerate().map(|(i, &j)| dot(&normals[i], &truth.normals()[j]).powi(2)).collect())
}

fn random_orthogonal_unit(a: &[f64], rng: &mut Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..a.len()).map(|_| rng.sample(StandardNormal)).collect();
        let p = dot(&g, a);
        let w: Vec<f64> = g.iter().zip(a).map(|(x, y)| x - p * y).collect();
        if let Some(w) = normalized(&w) {
            if crate::linalg::norm(&w) > 0.5 {
                return w;
            }
        }
    }
}

/// True normals, each turned by an independent random rotation whose chord
/// length is exactly `delta`.
pub fn oracle_normals(truth: &Parallelopiped, delta: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=2.0).contains(&delta) {
        return Err(invalid("oracle delta must lie in [0, 2]"));
    }
    let mut rng = rng_from_seed(seed);
    let theta = 2.0 * (delta / 2.0).asin();
    let (c, s) = (theta.cos(), theta.sin());
    if truth.dim() == 1 {
        return Ok(truth.normals().to_vec());
    }
    Ok(truth
        .normals()
        .iter()
        .map(|a| {
            let w = random_orthogonal_unit(a, &mut rng);
            let v: Vec<f64> = a.iter().zip(&w).map(|(x, y)| c * x + s * y).collect();
            normalized(&v).expect("rotation of a unit vector is non-zero")
        })
        .collect())
}

pub fn warm_start(
    cloud: &Cloud,
    eps: f64,
    cfg: &WarmStartConfig,
    filter: &FilterConfig,
    oracle_truth: Option<&Parallelopiped>,
    seed: u64,
) -> Result<WarmStartReport> {
    cfg.validate()?;
    match cfg.mode {
        WarmStartMode::Oracle => {
            let truth = oracle_truth.ok_or_else(|| invalid("oracle warm start requires the true body"))?;
            check_dim(cloud.dim(), truth.dim())?;
            let normals = oracle_normals(truth, cfg.oracle_delta, seed)?;
            let per_row_alignment = Some(alignment(&normals, truth)?);
            Ok(WarmStartReport {
                surrogate: vec![f64::NAN; normals.len()],
                normals,
                mode: WarmStartMode::Oracle,
                per_row_alignment,
                converged: true,
            })
        }
        WarmStartMode::Moment => moment_warm_start(cloud, eps, cfg, filter, seed),
    }
}

struct Whitened {
    dim: usize,
    z: Vec<f64>,
    /// Maps a whitened-frame normal back to the input frame (unnormalized).
    back: DMatrix<f64>,
}

fn whiten(cloud: &Cloud, eps: f64, cfg: &WarmStartConfig, filter: &FilterConfig) -> Result<Whitened> {
    let d = cloud.dim();
    let rows: Vec<usize> = cloud.active_indices().into_iter().take(cfg.max_points).collect();
    if rows.len() < 2 * d + 2 {
        return Err(Error::TooFewPoints { needed: 2 * d + 2, found: rows.len() });
    }
    if cfg.assume_whitened {
        let mut z = Vec::with_capacity(rows.len() * d);
        for &i in &rows {
            z.extend_from_slice(cloud.point(i));
        }
        return Ok(Whitened { dim: d, z, back: DMatrix::identity(d, d) });
    }
    let mu = robust_mean(cloud, eps, filter)?.estimate;
    let cov = robust_covariance(cloud, eps, filter)?;
    let w = inv_sqrt_spd(&rows_to_matrix(&cov.matrix))?;
    let mut z = Vec::with_capacity(rows.len() * d);
    let mut y = vec![0.0; d];
    for &i in &rows {
        for (j, v) in cloud.point(i).iter().enumerate() {
            y[j] = v - mu[j];
        }
        z.extend(mat_vec(&w, &y));
    }
    Ok(Whitened { dim: d, z, back: w })
}

/// Mean of `(u . z)⁴` and its gradient in `u`.
fn objective(z: &[f64], dim: usize, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let m = (z.len() / dim) as f64;
    let mut total = 0.0;
    match grad {
        Some(g) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            for x in z.chunks_exact(dim) {
                let p = dot(x, u);
                total += p.powi(4);
                let p3 = 4.0 * p.powi(3);
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += p3 * xj;
                }
            }
            g.iter_mut().for_each(|v| *v /= m);
        }
        None => {
            for x in z.chunks_exact(dim) {
                total += dot(x, u).powi(4);
            }
        }
    }
    total / m
}

/// Keeps rows with norm at most `radius`, unless fewer than `min_keep` remain.
fn trim_radial(z: Vec<f64>, dim: usize, radius: f64, min_keep: usize) -> Vec<f64> {
    let r2 = radius * radius;
    let kept: Vec<f64> = z.chunks_exact(dim).filter(|x| dot(x, x) <= r2).flatten().copied().collect();
    if kept.len() / dim < min_keep {
        z
    } else {
        kept
    }
}

fn project_out(v: &mut [f64], found: &[Vec<f64>]) {
    for f in found {
        let p = dot(v, f);
        for (x, y) in v.iter_mut().zip(f) {
            *x -= p * y;
        }
    }
}

fn ascend(w: &Whitened, start: Vec<f64>, found: &[Vec<f64>], max_iter: usize) -> (Vec<f64>, f64, bool) {
    let d = w.dim;
    let mut u = start;
    let mut grad = vec![0.0; d];
    let mut t = objective(&w.z, d, &u, Some(&mut grad));
    let mut eta: f64 = 0.3;
    for _ in 0..max_iter {
        project_out(&mut grad, found);
        let gu = dot(&grad, &u);
        grad.iter_mut().zip(&u).for_each(|(g, x)| *g -= gu * x);
        let gn = crate::linalg::norm(&grad);
        if gn < 1e-12 {
            return (u, t, true);
        }
        loop {
            let mut cand: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - eta * g / gn).collect();
            project_out(&mut cand, found);
            let cand = normalized(&cand).unwrap_or_else(|| u.clone());
            let tc = objective(&w.z, d, &cand, None);
            if tc < t {
                let gain = t - tc;
                u = cand;
                t = objective(&w.z, d, &u, Some(&mut grad));
                eta = (eta * 1.5).min(1.0);
                if gain <= 1e-12 * t.abs().max(1.0) {
                    return (u, t, true);
                }
                break;
            }
            eta *= 0.5;
            if eta < 1e-8 {
                return (u, t, true);
            }
        }
    }
    (u, t, false)
}

fn moment_warm_start(
    cloud: &Cloud,
    eps: f64,
    cfg: &WarmStartConfig,
    filter: &FilterConfig,
    seed: u64,
) -> Result<WarmStartReport> {
    let mut w = whiten(cloud, eps, cfg, filter)?;
    let d = w.dim;
    let radius = cfg.trim_radius * (3.0 * d as f64).sqrt();
    w.z = trim_radial(std::mem::take(&mut w.z), d, radius, 2 * d + 2);
    let mut rng = rng_from_seed(seed);
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut surrogate = Vec::with_capacity(d);
    let mut converged = true;
    for r in 0..d {
        let mut best: Option<(Vec<f64>, f64, bool)> = None;
        let restarts = if r + 1 == d { 1 } else { cfg.restarts };
        for _ in 0..restarts {
            let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            project_out(&mut g, &found);
            let Some(start) = normalized(&g) else { continue };
            let result = if r + 1 == d {
                let t = objective(&w.z, d, &start, None);
                (start, t, true)
            } else {
                ascend(&w, start, &found, cfg.max_iterations)
            };
            if best.as_ref().is_none_or(|b| result.1 < b.1) {
                best = Some(result);
            }
        }
        let (u, t, ok) = best.ok_or_else(|| Error::Degenerate("warm start restarts all failed".into()))?;
        converged &= ok;
        surrogate.push(5.0 / 6.0 * (3.0 - t));
        found.push(u);
    }
    let normals = found
        .iter()
        .map(|u| normalized(&mat_vec(&w.back, u)).ok_or_else(|| Error::Degenerate("zero normal".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(WarmStartReport { normals, mode: WarmStartMode::Moment, per_row_alignment: None, converged, surrogate })
}
