use serde::{Deserialize, Serialize};

use super::types::Parallelopiped;
use crate::error::{check_dim, Result};
use crate::linalg::{distance, dot};

/// Largest dimension solved by exact assignment; above it a greedy
/// largest-|inner product| matching is used.
pub const EXACT_MATCHING_MAX_DIM: usize = 12;

/// Pairing of estimated rows with truth rows up to sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMatching {
    /// `perm[i]` is the truth row matched to estimated row `i`.
    pub perm: Vec<usize>,
    /// +1 or -1 per estimated row.
    pub signs: Vec<f64>,
    /// `‖â_i − sign·a_perm(i)‖` per estimated row.
    pub errors: Vec<f64>,
}

impl RowMatching {
    pub fn total(&self) -> f64 {
        self.errors.iter().sum()
    }
}

fn signed_cost(est: &[f64], truth: &[f64]) -> (f64, f64) {
    let plus = distance(est, truth);
    let minus = est.iter().zip(truth).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    if minus < plus {
        (minus, -1.0)
    } else {
        (plus, 1.0)
    }
}

/// Matches rows of `est` to rows of `truth`, minimizing the summed distance
/// over permutations and per-row signs.
pub fn match_rows(est: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<RowMatching> {
    let d = est.len();
    check_dim(d, truth.len())?;
    for (a, b) in est.iter().zip(truth) {
        check_dim(a.len(), b.len())?;
    }
    let perm = if d <= EXACT_MATCHING_MAX_DIM {
        let cost: Vec<Vec<f64>> = est.iter().map(|a| truth.iter().map(|b| signed_cost(a, b).0).collect()).collect();
        hungarian(&cost)
    } else {
        greedy(est, truth)
    };
    let mut signs = Vec::with_capacity(d);
    let mut errors = Vec::with_capacity(d);
    for (i, &j) in perm.iter().enumerate() {
        let (c, s) = signed_cost(&est[i], &truth[j]);
        signs.push(s);
        errors.push(c);
    }
    Ok(RowMatching { perm, signs, errors })
}

/// `Σ_i ‖â_i − sign·a_π(i)‖` under the best matching.
pub fn column_error(est: &Parallelopiped, truth: &Parallelopiped) -> Result<f64> {
    Ok(match_rows(est.normals(), truth.normals())?.total())
}

fn greedy(est: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<usize> {
    let d = est.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for (i, a) in est.iter().enumerate() {
        for (j, b) in truth.iter().enumerate() {
            pairs.push((dot(a, b).abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut perm = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    perm
}

/// Minimum-cost perfect assignment on a square cost matrix (potentials
/// method, O(d^3)). Returns `perm[row] = column`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}
