use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::types::{AffineMap, Parallelopiped};
use crate::error::{check_dim, invalid, Result};
use crate::seed::rng_from_seed;

/// Hidden ground-truth label of a sample row. Only evaluation code reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    Inlier,
    Outlier,
    DeletedByAdversary,
}

/// Points with an active mask. This is everything an estimator gets to see.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    dim: usize,
    coords: Vec<f64>,
    active: Vec<bool>,
}

impl Cloud {
    /// Builds a cloud from row-major coordinates; all rows active.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(invalid(format!("{} coordinates do not split into rows of length {dim}", coords.len())));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("points must have finite coordinates"));
        }
        let n = coords.len() / dim;
        Ok(Self { dim, coords, active: vec![true; n] })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn with_active(mut self, active: Vec<bool>) -> Result<Self> {
        check_dim(self.len(), active.len())?;
        self.active = active;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows, active or not.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active rows only, row-major.
    pub fn active_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.active_count() * self.dim);
        for i in 0..self.len() {
            if self.active[i] {
                out.extend_from_slice(self.point(i));
            }
        }
        out
    }

    /// Applies `map` to every row, keeping the mask.
    pub fn mapped(&self, map: &AffineMap) -> Result<Self> {
        check_dim(self.dim, map.dim())?;
        let mut coords = vec![0.0; self.coords.len()];
        for (src, dst) in self.coords.chunks_exact(self.dim).zip(coords.chunks_exact_mut(self.dim)) {
            map.apply_into(src, dst);
        }
        Ok(Self { dim: self.dim, coords, active: self.active.clone() })
    }

    /// Linear projections `x -> rows . x` of every row.
    pub fn projected(&self, rows: &[Vec<f64>]) -> Result<Self> {
        for r in rows {
            check_dim(self.dim, r.len())?;
        }
        let k = rows.len();
        let mut coords = Vec::with_capacity(self.len() * k);
        for x in self.coords.chunks_exact(self.dim) {
            for r in rows {
                coords.push(r.iter().zip(x).map(|(a, b)| a * b).sum());
            }
        }
        Ok(Self { dim: k, coords, active: self.active.clone() })
    }
}

/// A cloud together with its hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    cloud: Cloud,
    labels: Vec<TruthLabel>,
}

impl SampleSet {
    pub fn new(cloud: Cloud, labels: Vec<TruthLabel>) -> Result<Self> {
        check_dim(cloud.len(), labels.len())?;
        Ok(Self { cloud, labels })
    }

    /// Wraps an unlabeled cloud, marking every row as an inlier.
    pub fn unlabeled(cloud: Cloud) -> Self {
        let labels = vec![TruthLabel::Inlier; cloud.len()];
        Self { cloud, labels }
    }

    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> Cloud {
        self.cloud
    }

    pub fn labels(&self) -> &[TruthLabel] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn count_label(&self, label: TruthLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// `n` i.i.d. uniform points on `[-1, 1]^d`.
pub fn sample_standard_cube(d: usize, n: usize, seed: u64) -> Result<SampleSet> {
    if d == 0 || n == 0 {
        return Err(invalid(format!("need d >= 1 and n >= 1, got d = {d}, n = {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..n * d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    Ok(SampleSet::unlabeled(Cloud::new(d, coords)?))
}

/// `n` i.i.d. uniform points on a parallelopiped.
pub fn sample_body(body: &Parallelopiped, n: usize, seed: u64) -> Result<SampleSet> {
    let map = body.to_affine_map()?;
    apply_affine(&map, &sample_standard_cube(body.dim(), n, seed)?)
}

pub fn apply_affine(map: &AffineMap, s: &SampleSet) -> Result<SampleSet> {
    Ok(SampleSet { cloud: s.cloud.mapped(map)?, labels: s.labels.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_requests() {
        assert!(sample_standard_cube(0, 10, 1).is_err());
        assert!(sample_standard_cube(2, 0, 1).is_err());
    }

    #[test]
    fn first_and_second_moments_in_one_dimension() {
        let s = sample_standard_cube(1, 1_000_000, 11).unwrap();
        let c = s.cloud().coords();
        let n = c.len() as f64;
        let m1 = c.iter().sum::<f64>() / n;
        let m2 = c.iter().map(|x| x * x).sum::<f64>() / n;
        assert!(m1.abs() < 0.005);
        assert!((m2 - 1.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn fourth_moment_per_coordinate() {
        let s = sample_standard_cube(3, 1_000_000, 12).unwrap();
        for j in 0..3 {
            let m4 = (0..s.len()).map(|i| s.cloud().point(i)[j].powi(4)).sum::<f64>() / s.len() as f64;
            assert!((m4 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(sample_standard_cube(3, 100, 5).unwrap(), sample_standard_cube(3, 100, 5).unwrap());
        assert_ne!(sample_standard_cube(3, 100, 5).unwrap(), sample_standard_cube(3, 100, 6).unwrap());
    }

    #[test]
    fn affine_identity_and_scaling() {
        let s = sample_standard_cube(3, 1000, 1).unwrap();
        assert_eq!(apply_affine(&AffineMap::identity(3), &s).unwrap(), s);
        let m = AffineMap::new(nalgebra::DMatrix::identity(3, 3) * 2.0, vec![0.0; 3]).unwrap();
        let t = apply_affine(&m, &s).unwrap();
        assert!(t.cloud().coords().iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn affine_round_trip() {
        let s = sample_standard_cube(3, 1000, 2).unwrap();
        let m = AffineMap::from_rows(
            &[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0], vec![0.5, 0.0, 3.0]],
            vec![4.0, -1.0, 0.5],
        )
        .unwrap();
        let back = apply_affine(&m.inverse().unwrap(), &apply_affine(&m, &s).unwrap()).unwrap();
        for (a, b) in back.cloud().coords().iter().zip(s.cloud().coords()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = sample_standard_cube(2, 10, 1).unwrap();
        assert!(apply_affine(&AffineMap::identity(3), &s).is_err());
    }
}
