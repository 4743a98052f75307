use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Cloud;
use crate::linalg::{median, top_eigen};

/// Filtering requires ε strictly below this.
pub const MAX_FILTER_EPS: f64 = 0.25;

/// MAD to standard deviation for a normal law.
const MAD_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Stop once the top eigenvalue is below `(1 + c_filter·√ε)·σ²`.
    pub c_filter: f64,
    /// Total removals are capped at `removal_cap·ε·n`.
    pub removal_cap: f64,
    pub max_iterations: usize,
    /// Before filtering, rows with `‖x − med‖² > gross_cutoff²·Σ_j s_j²`
    /// are removed in one pass (`med` and `s_j` are the coordinate-wise
    /// median and MAD scale), so far outliers are dropped the same way at
    /// any distance.
    pub gross_cutoff: Option<f64>,
    /// Expected variance along any direction; the median absolute deviation
    /// of the projections is used when unset.
    pub sigma2: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { c_filter: 4.0, removal_cap: 2.0, max_iterations: 200, gross_cutoff: Some(10.0), sigma2: None }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_filter >= 0.0) || !(self.removal_cap >= 0.0) {
            return Err(invalid("filter constants must be non-negative"));
        }
        if let Some(s) = self.sigma2 {
            if !(s >= 0.0) {
                return Err(invalid("filter sigma2 must be non-negative"));
            }
        }
        if let Some(g) = self.gross_cutoff {
            if !(g > 0.0) {
                return Err(invalid("filter gross_cutoff must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustMeanReport {
    pub estimate: Vec<f64>,
    /// Row indices removed by the filter, ascending.
    pub removed_indices: Vec<usize>,
    pub filter_iterations: usize,
    pub final_top_eigenvalue: f64,
    /// The removal cap was hit before the spectral test passed.
    pub capped: bool,
}

pub(crate) fn min_points(d: usize) -> usize {
    (d + 1).max(10)
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..MAX_FILTER_EPS).contains(&eps) {
        return Err(invalid(format!("filter eps must lie in [0, {MAX_FILTER_EPS}), got {eps}")));
    }
    Ok(())
}

pub(crate) fn mean_and_cov(data: &[f64], dim: usize, keep: &[bool]) -> (Vec<f64>, DMatrix<f64>, usize) {
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for (x, &k) in data.chunks_exact(dim).zip(keep) {
        if k {
            count += 1;
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
    }
    let c = count.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= c);
    let mut cov = DMatrix::zeros(dim, dim);
    let mut y = vec![0.0; dim];
    for (x, &k) in data.chunks_exact(dim).zip(keep) {
        if k {
            for j in 0..dim {
                y[j] = x[j] - mean[j];
            }
            for a in 0..dim {
                for b in a..dim {
                    cov[(a, b)] += y[a] * y[b];
                }
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            cov[(a, b)] /= c;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov, count)
}

/// Which kept rows to drop: the `k` largest scores, ties to the lower index.
pub(crate) fn drop_largest(scores: &[(f64, usize)], k: usize, keep: &mut [bool]) -> Vec<usize> {
    let mut s = scores.to_vec();
    let k = k.min(s.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    s.select_nth_unstable_by(k - 1, cmp);
    let mut out: Vec<usize> = s[..k].iter().map(|&(_, i)| i).collect();
    for &i in &out {
        keep[i] = false;
    }
    out.sort_unstable();
    out
}

/// Squared distance of each row from the coordinate-wise median, and the
/// summed squared MAD scales of the coordinates.
fn gross_scores(data: &[f64], dim: usize) -> (Vec<(f64, usize)>, f64) {
    let mut med = Vec::with_capacity(dim);
    let mut spread = 0.0;
    for j in 0..dim {
        let col: Vec<f64> = data.chunks_exact(dim).map(|x| x[j]).collect();
        let c = median(&col);
        let dev: Vec<f64> = col.iter().map(|v| (v - c).abs()).collect();
        spread += (MAD_SCALE * median(&dev)).powi(2);
        med.push(c);
    }
    let scores = data
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, x)| (x.iter().zip(&med).map(|(a, m)| (a - m) * (a - m)).sum(), i))
        .collect();
    (scores, spread)
}

pub(crate) struct FilterOutcome {
    pub mean: Vec<f64>,
    pub removed: Vec<usize>,
    pub iterations: usize,
    pub top_eigenvalue: f64,
    pub capped: bool,
}

/// Spectral filter over row-major `data` (all rows participate).
pub(crate) fn filter_rows(data: &[f64], dim: usize, eps: f64, cfg: &FilterConfig) -> FilterOutcome {
    let n = data.len() / dim;
    let mut keep = vec![true; n];
    let (mut mean, mut cov, _) = mean_and_cov(data, dim, &keep);
    let mut removed = Vec::new();
    let mut iterations = 0;
    let mut capped = false;
    let (mut lambda, _) = top_eigen(&cov);
    if eps == 0.0 {
        return FilterOutcome { mean, removed, iterations, top_eigenvalue: lambda, capped };
    }
    let cap = (cfg.removal_cap * eps * n as f64).floor() as usize;
    if let Some(g) = cfg.gross_cutoff {
        let (scores, spread) = gross_scores(data, dim);
        if spread > 0.0 {
            let k = scores.iter().filter(|s| s.0 > g * g * spread).count();
            removed.extend(drop_largest(&scores, k.min(cap), &mut keep));
            if !removed.is_empty() {
                (mean, cov, _) = mean_and_cov(data, dim, &keep);
            }
        }
    }
    let mut proj = Vec::with_capacity(n);
    while iterations < cfg.max_iterations {
        let (l, v) = top_eigen(&cov);
        lambda = l;
        proj.clear();
        for (i, x) in data.chunks_exact(dim).enumerate() {
            if keep[i] {
                proj.push((x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>(), i));
            }
        }
        let vals: Vec<f64> = proj.iter().map(|p| p.0).collect();
        let center = median(&vals);
        let sigma2 = cfg.sigma2.unwrap_or_else(|| {
            let dev: Vec<f64> = vals.iter().map(|p| (p - center).abs()).collect();
            (MAD_SCALE * median(&dev)).powi(2)
        });
        let threshold = (1.0 + cfg.c_filter * eps.sqrt()) * sigma2;
        if lambda <= threshold {
            break;
        }
        let excess = if threshold > 0.0 { lambda / threshold - 1.0 } else { 1.0 };
        let want = ((eps * excess.min(1.0) / 2.0) * proj.len() as f64).ceil().max(1.0) as usize;
        let allowed = cap.saturating_sub(removed.len());
        if allowed == 0 {
            capped = true;
            break;
        }
        let scores: Vec<(f64, usize)> = proj.iter().map(|&(p, i)| ((p - center).powi(2), i)).collect();
        removed.extend(drop_largest(&scores, want.min(allowed), &mut keep));
        iterations += 1;
        let (m, c, _) = mean_and_cov(data, dim, &keep);
        mean = m;
        cov = c;
    }
    removed.sort_unstable();
    FilterOutcome { mean, removed, iterations, top_eigenvalue: lambda, capped }
}

/// Filtered mean over the active rows of `cloud`.
pub fn robust_mean(cloud: &Cloud, eps: f64, cfg: &FilterConfig) -> Result<RobustMeanReport> {
    check_eps(eps)?;
    cfg.validate()?;
    let rows = cloud.active_indices();
    let needed = min_points(cloud.dim());
    if rows.len() < needed {
        return Err(Error::TooFewPoints { needed, found: rows.len() });
    }
    let data = cloud.active_coords();
    let out = filter_rows(&data, cloud.dim(), eps, cfg);
    Ok(RobustMeanReport {
        estimate: out.mean,
        removed_indices: out.removed.iter().map(|&j| rows[j]).collect(),
        filter_iterations: out.iterations,
        final_top_eigenvalue: out.top_eigenvalue,
        capped: out.capped,
    })
}

/// Filtered mean of row-major `data`; removed indices refer to rows of `data`.
pub fn robust_mean_of_rows(data: &[f64], dim: usize, eps: f64, cfg: &FilterConfig) -> Result<RobustMeanReport> {
    check_eps(eps)?;
    cfg.validate()?;
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(invalid("row data does not match the dimension"));
    }
    let n = data.len() / dim;
    if n < min_points(dim) {
        return Err(Error::TooFewPoints { needed: min_points(dim), found: n });
    }
    let out = filter_rows(data, dim, eps, cfg);
    Ok(RobustMeanReport {
        estimate: out.mean,
        removed_indices: out.removed,
        filter_iterations: out.iterations,
        final_top_eigenvalue: out.top_eigenvalue,
        capped: out.capped,
    })
}
