use serde::{Deserialize, Serialize};

use super::sample::Cloud;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{dot, norm};

const UNIT_TOL: f64 = 1e-9;

pub(crate) fn check_unit(a: &[f64]) -> Result<()> {
    let n = norm(a);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

/// Points escaping the band `|x . a| <= threshold`. A point with
/// `x . a < -threshold` is stored with sign -1 and stands for `-x`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabSet {
    pub indices: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SlabSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Symmetrized points `sign . x`, row-major.
    pub fn symmetrized(&self, cloud: &Cloud) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * cloud.dim());
        for (&i, &s) in self.indices.iter().zip(&self.signs) {
            let sign = s as f64;
            out.extend(cloud.point(i).iter().map(|v| sign * v));
        }
        out
    }
}

pub fn slab_outside(cloud: &Cloud, a: &[f64], threshold: f64) -> Result<SlabSet> {
    check_dim(cloud.dim(), a.len())?;
    check_unit(a)?;
    if !(threshold > 0.0) {
        return Err(invalid(format!("slab threshold must be positive, got {threshold}")));
    }
    let mut out = SlabSet::default();
    for i in 0..cloud.len() {
        if !cloud.is_active(i) {
            continue;
        }
        let p = dot(cloud.point(i), a);
        if p > threshold {
            out.indices.push(i);
            out.signs.push(1);
        } else if p < -threshold {
            out.indices.push(i);
            out.signs.push(-1);
        }
    }
    Ok(out)
}

/// Mean and (population) variance of `(sign . x) . direction` over the slab.
pub fn truncated_direction_stats(cloud: &Cloud, slab: &SlabSet, direction: &[f64]) -> Result<(f64, f64)> {
    check_dim(cloud.dim(), direction.len())?;
    check_unit(direction)?;
    if slab.is_empty() {
        return Err(Error::EmptySet("slab has no points".into()));
    }
    let vals: Vec<f64> =
        slab.indices.iter().zip(&slab.signs).map(|(&i, &s)| s as f64 * dot(cloud.point(i), direction)).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var))
}

/// Empirical `E(x . a | x . a >= t)` over active points.
pub fn truncated_mean_along(cloud: &Cloud, a: &[f64], t: f64) -> Result<f64> {
    check_dim(cloud.dim(), a.len())?;
    check_unit(a)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..cloud.len() {
        if cloud.is_active(i) {
            let p = dot(cloud.point(i), a);
            if p >= t {
                sum += p;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptySet(format!("no active point has x . a >= {t}")));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_standard_cube;

    #[test]
    fn inside_points_give_empty_slab() {
        let s = sample_standard_cube(3, 1000, 3).unwrap();
        assert!(slab_outside(s.cloud(), &[1.0, 0.0, 0.0], 1.0).unwrap().is_empty());
    }

    #[test]
    fn single_escaping_point() {
        let c = Cloud::new(2, vec![2.0, 0.0]).unwrap();
        let slab = slab_outside(&c, &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(slab, SlabSet { indices: vec![0], signs: vec![1] });
    }

    #[test]
    fn negative_side_is_symmetrized() {
        let c = Cloud::new(1, vec![-3.0, 0.5, 2.0]).unwrap();
        let slab = slab_outside(&c, &[1.0], 1.0).unwrap();
        assert_eq!(slab.signs, vec![-1, 1]);
        assert_eq!(slab.symmetrized(&c), vec![3.0, 2.0]);
    }

    #[test]
    fn inactive_points_are_skipped() {
        let c = Cloud::new(1, vec![5.0, 5.0]).unwrap().with_active(vec![false, true]).unwrap();
        assert_eq!(slab_outside(&c, &[1.0], 1.0).unwrap().indices, vec![1]);
    }

    #[test]
    fn rejects_bad_direction_and_threshold() {
        let c = Cloud::new(2, vec![0.0, 0.0]).unwrap();
        assert!(slab_outside(&c, &[1.0, 1.0], 1.0).is_err());
        assert!(slab_outside(&c, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn half_interval_stats_in_one_dimension() {
        let s = sample_standard_cube(1, 1_000_000, 4).unwrap();
        let c = s.cloud();
        let pos: Vec<usize> = (0..c.len()).filter(|&i| c.point(i)[0] >= 0.0).collect();
        let slab = SlabSet { signs: vec![1; pos.len()], indices: pos };
        let (m, v) = truncated_direction_stats(c, &slab, &[1.0]).unwrap();
        assert!((m - 0.5).abs() < 0.005);
        assert!((v - 1.0 / 12.0).abs() < 0.005);
        let t = truncated_mean_along(c, &[1.0], 0.0).unwrap();
        assert!((t - 0.5).abs() < 0.005);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let c = Cloud::new(1, vec![0.0]).unwrap();
        assert!(truncated_direction_stats(&c, &SlabSet::default(), &[1.0]).is_err());
        assert!(truncated_mean_along(&c, &[1.0], 0.5).is_err());
    }
}
