use serde::{Deserialize, Serialize};

use super::filter::{check_eps, drop_largest, mean_and_cov, min_points, FilterConfig};
use crate::error::{Error, Result};
use crate::geometry::Cloud;
use crate::linalg::{is_positive_definite, matrix_to_rows, median, top_eigen};

const MAD_SCALE: f64 = 1.482_602_218_505_602;

/// Kurtosis ceiling for projections of a well-behaved law.
const KURTOSIS_BASE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustCovarianceReport {
    pub matrix: Vec<Vec<f64>>,
    /// Mean of the retained rows.
    pub mean: Vec<f64>,
    pub removed_indices: Vec<usize>,
    pub filter_iterations: usize,
    pub capped: bool,
}

/// Covariance over the active rows, filtered along the top eigenvector
/// while either its variance or the fourth moment of the projections is
/// too large.
pub fn robust_covariance(cloud: &Cloud, eps: f64, cfg: &FilterConfig) -> Result<RobustCovarianceReport> {
    check_eps(eps)?;
    cfg.validate()?;
    let dim = cloud.dim();
    let rows = cloud.active_indices();
    let needed = min_points(dim);
    if rows.len() < needed {
        return Err(Error::TooFewPoints { needed, found: rows.len() });
    }
    let data = cloud.active_coords();
    let n = rows.len();
    let mut keep = vec![true; n];
    let (mut mean, mut cov, _) = mean_and_cov(&data, dim, &keep);
    let mut removed = Vec::new();
    let mut iterations = 0;
    let mut capped = false;
    if eps > 0.0 {
        let cap = (cfg.removal_cap * eps * n as f64).floor() as usize;
        let slack = 1.0 + cfg.c_filter * eps.sqrt();
        while iterations < cfg.max_iterations {
            let (lambda, v) = top_eigen(&cov);
            let proj: Vec<(f64, usize)> = data
                .chunks_exact(dim)
                .enumerate()
                .filter(|(i, _)| keep[*i])
                .map(|(i, x)| (x.iter().zip(&v).zip(&mean).map(|((a, b), m)| (a - m) * b).sum::<f64>(), i))
                .collect();
            let vals: Vec<f64> = proj.iter().map(|p| p.0).collect();
            let center = median(&vals);
            let sigma2 = cfg.sigma2.unwrap_or_else(|| {
                let dev: Vec<f64> = vals.iter().map(|p| (p - center).abs()).collect();
                (MAD_SCALE * median(&dev)).powi(2)
            });
            let m = vals.len() as f64;
            let m2 = vals.iter().map(|p| p * p).sum::<f64>() / m;
            let m4 = vals.iter().map(|p| p.powi(4)).sum::<f64>() / m;
            let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };
            let var_ratio = if sigma2 > 0.0 {
                lambda / (slack * sigma2)
            } else if lambda > 0.0 {
                2.0
            } else {
                0.0
            };
            let excess = var_ratio.max(kurtosis / (slack * KURTOSIS_BASE)) - 1.0;
            if excess <= 0.0 {
                break;
            }
            let allowed = cap.saturating_sub(removed.len());
            if allowed == 0 {
                capped = true;
                break;
            }
            let want = ((eps * excess.min(1.0) / 2.0) * m).ceil().max(1.0) as usize;
            let scores: Vec<(f64, usize)> = proj.iter().map(|&(p, i)| ((p - center).powi(2), i)).collect();
            removed.extend(drop_largest(&scores, want.min(allowed), &mut keep));
            iterations += 1;
            let (mm, cc, _) = mean_and_cov(&data, dim, &keep);
            mean = mm;
            cov = cc;
        }
    }
    if !is_positive_definite(&cov) {
        return Err(Error::NotPositiveDefinite);
    }
    removed.sort_unstable();
    Ok(RobustCovarianceReport {
        matrix: matrix_to_rows(&cov),
        mean,
        removed_indices: removed.iter().map(|&j| rows[j]).collect(),
        filter_iterations: iterations,
        capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_affine, sample_standard_cube, AffineMap};
    use crate::linalg::{rows_to_matrix, spectral_norm_sym};
    use nalgebra::DMatrix;

    #[test]
    fn clean_cube_is_a_third_of_identity() {
        let s = sample_standard_cube(3, 1_000_000, 1).unwrap();
        let r = robust_covariance(s.cloud(), 0.0, &FilterConfig::default()).unwrap();
        let err = spectral_norm_sym(&(rows_to_matrix(&r.matrix) - DMatrix::identity(3, 3) / 3.0));
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn scaled_cube() {
        let s = sample_standard_cube(2, 200_000, 2).unwrap();
        let m = AffineMap::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0]).unwrap();
        let t = apply_affine(&m, &s).unwrap();
        let r = robust_covariance(t.cloud(), 0.0, &FilterConfig::default()).unwrap();
        assert!((r.matrix[0][0] / (1.0 / 3.0) - 1.0).abs() < 0.02);
        assert!((r.matrix[1][1] / (4.0 / 3.0) - 1.0).abs() < 0.02);
        assert!(r.matrix[0][1].abs() < 0.02);
    }

    #[test]
    fn degenerate_input_is_not_positive_definite() {
        let c = Cloud::new(2, (0..40).map(|i| if i % 2 == 0 { i as f64 } else { 0.0 }).collect()).unwrap();
        assert_eq!(robust_covariance(&c, 0.0, &FilterConfig::default()), Err(Error::NotPositiveDefinite));
    }
}
