use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{condition_number, mat_vec, matrix_to_rows, norm, rows_to_matrix};

/// Relative tolerance for membership tests.
pub const MEMBERSHIP_RTOL: f64 = 1e-9;

/// Default bound on the condition number of a normal matrix.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

const UNIT_TOL: f64 = 1e-9;

fn within(value: f64, lower: f64, upper: f64) -> bool {
    let tol = MEMBERSHIP_RTOL * 1f64.max(lower.abs()).max(upper.abs());
    value >= lower - tol && value <= upper + tol
}

/// Axis-aligned box `lower[i] <= x_i <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(invalid("box must have dimension >= 1"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(invalid(format!("box side {i} is not a proper interval: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-1, 1]^d`.
    pub fn standard(d: usize) -> Self {
        Self { lower: vec![-1.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i).ln()).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&l, &u))| within(v, l, u))
    }

    pub(crate) fn set_lower(&mut self, i: usize, value: f64) {
        debug_assert!(value < self.upper[i]);
        self.lower[i] = value;
    }

    pub(crate) fn set_upper(&mut self, i: usize, value: f64) {
        debug_assert!(value > self.lower[i]);
        self.upper[i] = value;
    }

    pub fn to_parallelopiped(&self) -> Parallelopiped {
        let d = self.dim();
        let normals = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Parallelopiped { normals, lower: self.lower.clone(), upper: self.upper.clone() }
    }
}

/// The body `{x : lower[i] <= a_i . x <= upper[i]}` with unit normals `a_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parallelopiped {
    normals: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Parallelopiped {
    pub fn new(normals: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::with_condition_bound(normals, lower, upper, DEFAULT_MAX_CONDITION)
    }

    /// Like [`Parallelopiped::new`] with an explicit condition-number bound.
    /// Normals within 1e-9 of unit length are renormalized.
    pub fn with_condition_bound(
        normals: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        max_condition: f64,
    ) -> Result<Self> {
        let d = normals.len();
        if d == 0 {
            return Err(invalid("parallelopiped must have dimension >= 1"));
        }
        check_dim(d, lower.len())?;
        check_dim(d, upper.len())?;
        let mut unit = Vec::with_capacity(d);
        for (i, a) in normals.into_iter().enumerate() {
            check_dim(d, a.len())?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("normal {i} has non-finite entries")));
            }
            let n = norm(&a);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(invalid(format!("normal {i} has norm {n}, expected 1")));
            }
            unit.push(a.iter().map(|v| v / n).collect::<Vec<_>>());
        }
        for i in 0..d {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] >= upper[i] {
                return Err(invalid(format!("facet pair {i} is not a proper interval: [{}, {}]", lower[i], upper[i])));
            }
        }
        let cond = condition_number(&rows_to_matrix(&unit));
        if !(cond <= max_condition) {
            return Err(Error::Degenerate(format!(
                "normal matrix condition number {cond:e} exceeds {max_condition:e}"
            )));
        }
        Ok(Self { normals: unit, lower, upper })
    }

    /// `[-1, 1]^d`.
    pub fn standard(d: usize) -> Self {
        AxisBox::standard(d).to_parallelopiped()
    }

    pub fn dim(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn normal_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.normals)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.normals.iter().enumerate().all(|(i, a)| {
            let p: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
            within(p, self.lower[i], self.upper[i])
        })
    }

    /// Natural log of the volume.
    pub fn log_volume(&self) -> f64 {
        let det = self.normal_matrix().determinant().abs();
        (0..self.dim()).map(|i| (self.upper[i] - self.lower[i]).ln()).sum::<f64>() - det.ln()
    }

    /// Affine map carrying `[-1, 1]^d` onto this body.
    pub fn to_affine_map(&self) -> Result<AffineMap> {
        let d = self.dim();
        let inv =
            self.normal_matrix().try_inverse().ok_or_else(|| Error::Degenerate("normal matrix is singular".into()))?;
        let half = DMatrix::from_fn(d, d, |i, j| if i == j { 0.5 * (self.upper[i] - self.lower[i]) } else { 0.0 });
        let mid: Vec<f64> = (0..d).map(|i| 0.5 * (self.upper[i] + self.lower[i])).collect();
        let shift = mat_vec(&inv, &mid);
        AffineMap::new(&inv * half, shift)
    }

    /// Axis-aligned box, when every normal is a signed coordinate vector.
    pub fn as_axis_box(&self) -> Option<AxisBox> {
        let d = self.dim();
        let mut lower = vec![0.0; d];
        let mut upper = vec![0.0; d];
        let mut seen = vec![false; d];
        for (i, a) in self.normals.iter().enumerate() {
            let j = (0..d).find(|&j| (a[j].abs() - 1.0).abs() < 1e-12)?;
            if seen[j] || a.iter().enumerate().any(|(k, v)| k != j && v.abs() > 1e-12) {
                return None;
            }
            seen[j] = true;
            if a[j] > 0.0 {
                lower[j] = self.lower[i];
                upper[j] = self.upper[i];
            } else {
                lower[j] = -self.upper[i];
                upper[j] = -self.lower[i];
            }
        }
        AxisBox::new(lower, upper).ok()
    }
}

/// `x -> matrix . x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    shift: Vec<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, shift: Vec<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("affine map matrix must be square"));
        }
        check_dim(matrix.nrows(), shift.len())?;
        if matrix.iter().chain(&shift).any(|v| !v.is_finite()) {
            return Err(invalid("affine map has non-finite entries"));
        }
        let det = matrix.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Degenerate("affine map matrix is singular".into()));
        }
        Ok(Self { matrix, shift })
    }

    pub fn identity(d: usize) -> Self {
        Self { matrix: DMatrix::identity(d, d), shift: vec![0.0; d] }
    }

    pub fn from_rows(rows: &[Vec<f64>], shift: Vec<f64>) -> Result<Self> {
        Self::new(rows_to_matrix(rows), shift)
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn matrix_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.matrix)
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.shift.clone();
        self.apply_into(x, &mut out);
        out
    }

    /// Writes `matrix . x + shift` into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.shift[i];
            for (j, xj) in x.iter().enumerate() {
                acc += self.matrix[(i, j)] * xj;
            }
            *o = acc;
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("affine map matrix is singular".into()))?;
        let shift = mat_vec(&inv, &self.shift).iter().map(|v| -v).collect();
        Self::new(inv, shift)
    }

    /// `self` after `first`: `x -> self(first(x))`.
    pub fn compose(&self, first: &AffineMap) -> Result<Self> {
        check_dim(self.dim(), first.dim())?;
        let matrix = &self.matrix * &first.matrix;
        let shift = self.apply(&first.shift);
        Self::new(matrix, shift)
    }

    /// Image of `[-1, 1]^d`: normals are the normalized rows of the inverse.
    pub fn to_parallelopiped(&self) -> Result<Parallelopiped> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("affine map matrix is singular".into()))?;
        let d = self.dim();
        let mut normals = Vec::with_capacity(d);
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for i in 0..d {
            let row: Vec<f64> = (0..d).map(|j| inv[(i, j)]).collect();
            let r = norm(&row);
            let a: Vec<f64> = row.iter().map(|v| v / r).collect();
            let c: f64 = a.iter().zip(&self.shift).map(|(u, v)| u * v).sum();
            normals.push(a);
            lower.push(c - 1.0 / r);
            upper.push(c + 1.0 / r);
        }
        Parallelopiped::with_condition_bound(normals, lower, upper, f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rejects_inverted_side() {
        assert!(AxisBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(AxisBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn parallelopiped_rejects_non_unit_normal() {
        let r = Parallelopiped::new(vec![vec![2.0, 0.0], vec![0.0, 1.0]], vec![-1.0; 2], vec![1.0; 2]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn parallelopiped_rejects_parallel_normals() {
        let r = Parallelopiped::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![-1.0; 2], vec![1.0; 2]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn affine_round_trip_through_parallelopiped() {
        let m = AffineMap::from_rows(&[vec![2.0, 0.5], vec![-0.3, 1.0]], vec![1.0, -2.0]).unwrap();
        let p = m.to_parallelopiped().unwrap();
        let back = p.to_affine_map().unwrap();
        // The map is only defined up to the cube's symmetries; compare bodies.
        for s in [[1.0, 1.0], [-1.0, 1.0], [0.3, -0.7]] {
            assert!(p.contains(&m.apply(&s)));
            assert!(p.contains(&back.apply(&s)));
        }
        assert!((p.log_volume() - (4.0 * m.matrix().determinant().abs()).ln()).abs() < 1e-12);
    }

    #[test]
    fn standard_cube_membership_tolerance() {
        let p = Parallelopiped::standard(2);
        assert!(p.contains(&[1.0 + 1e-12, -1.0]));
        assert!(!p.contains(&[1.0 + 1e-6, 0.0]));
    }

    #[test]
    fn axis_box_detected_with_sign_flips() {
        let p = Parallelopiped::new(vec![vec![0.0, -1.0], vec![1.0, 0.0]], vec![-3.0, 0.0], vec![2.0, 1.0]).unwrap();
        let b = p.as_axis_box().unwrap();
        assert_eq!(b.lower(), &[0.0, -2.0]);
        assert_eq!(b.upper(), &[1.0, 3.0]);
    }
}
