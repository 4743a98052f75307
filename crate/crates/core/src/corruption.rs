//! ε-corruption by replacement: a uniformly random ⌈εn⌉ subset of the clean
//! sample is deleted and the same number of adversarial points inserted.
//! Adversaries are omniscient: they see the clean sample and the true body.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::geometry::{AffineMap, Cloud, Parallelopiped, SampleSet, TruthLabel};
use crate::linalg::norm;
use crate::seed::{rng_from_seed, Rng};

fn default_spread() -> f64 {
    0.1
}
fn default_width() -> f64 {
    0.05
}
fn default_multiplier() -> f64 {
    1.5
}
fn default_radius() -> f64 {
    100.0
}

/// Adversary strategy and its parameters. Coordinates `s` below are in the
/// frame of the true body, where it is `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Adversary {
    /// No corruption; ε is ignored.
    None,
    /// Points on the all-ones diagonal just beyond the corner:
    /// `s = (1 + spread·u)·1` with `u ~ U(0, 1]`.
    CornerShift {
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// A slab beyond one facet: `s_facet = ±(1 + width·u)`, other
    /// coordinates uniform.
    FacetCluster {
        facet: usize,
        #[serde(default)]
        negative: bool,
        #[serde(default = "default_width")]
        width: f64,
    },
    /// Clusters inside pairwise corner-slab intersections
    /// `s_i ∈ [1 − 2k1ε/d, 1]`, `s_j ∈ [1 − 2k2ε/d, 1]`, each holding
    /// `multiplier` times the two-dimensional density threshold
    /// `10·k1·k2·ε²/d²·n`. Pairs are visited in order until the budget is spent.
    BandIntersection {
        #[serde(default = "default_multiplier")]
        multiplier: f64,
        #[serde(default)]
        k1: Option<usize>,
        #[serde(default)]
        k2: Option<usize>,
    },
    /// Uniform directions at distance `radius` from the body's center.
    FarUniform {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    /// Deletes the ⌈εn⌉ points deepest along one facet without inserting.
    DeleteOnly { facet: usize },
}

impl Default for Adversary {
    fn default() -> Self {
        Adversary::CornerShift { spread: default_spread() }
    }
}

impl Adversary {
    pub fn name(&self) -> &'static str {
        match self {
            Adversary::None => "none",
            Adversary::CornerShift { .. } => "corner_shift",
            Adversary::FacetCluster { .. } => "facet_cluster",
            Adversary::BandIntersection { .. } => "band_intersection",
            Adversary::FarUniform { .. } => "far_uniform",
            Adversary::DeleteOnly { .. } => "delete_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub epsilon: f64,
    #[serde(default)]
    pub adversary: Adversary,
    #[serde(default)]
    pub seed: u64,
}

/// `⌈εn⌉`, robust to representation error in `ε·n`.
pub fn corruption_count(epsilon: f64, n: usize) -> usize {
    let raw = epsilon * n as f64;
    let r = raw.round();
    if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
        r as usize
    } else {
        raw.ceil() as usize
    }
}

impl CorruptionSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 0.5), got {}", self.epsilon)));
        }
        match self.adversary {
            Adversary::None => {}
            Adversary::CornerShift { spread } => {
                if !(spread > 0.0 && spread.is_finite()) {
                    return Err(invalid("corner_shift spread must be positive"));
                }
            }
            Adversary::FacetCluster { facet, width, .. } => {
                if facet >= d {
                    return Err(invalid(format!("facet {facet} out of range for d = {d}")));
                }
                if !(width > 0.0 && width.is_finite()) {
                    return Err(invalid("facet_cluster width must be positive"));
                }
            }
            Adversary::BandIntersection { multiplier, k1, k2 } => {
                if d < 2 {
                    return Err(invalid("band_intersection needs d >= 2"));
                }
                if !(multiplier > 1.0 && multiplier.is_finite()) {
                    return Err(invalid("band_intersection multiplier must exceed 1"));
                }
                for k in [k1, k2].into_iter().flatten() {
                    if k == 0 || k > d {
                        return Err(invalid(format!("grid index {k} outside 1..={d}")));
                    }
                }
                if self.epsilon > 0.0 {
                    let depth = 2.0 * k1.unwrap_or(d).max(k2.unwrap_or(d)) as f64 * self.epsilon / d as f64;
                    if depth >= 2.0 {
                        return Err(invalid("band_intersection slabs cover the whole body"));
                    }
                }
            }
            Adversary::FarUniform { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("far_uniform radius must be positive"));
                }
            }
            Adversary::DeleteOnly { facet } => {
                if facet >= d {
                    return Err(invalid(format!("facet {facet} out of range for d = {d}")));
                }
            }
        }
        Ok(())
    }
}

/// Corrupts `clean`, a sample from `truth`. Surviving inliers and outliers
/// are shuffled together; deleted rows are appended as inactive rows
/// labeled `DeletedByAdversary`.
pub fn corrupt(clean: &SampleSet, truth: &Parallelopiped, spec: &CorruptionSpec) -> Result<SampleSet> {
    let d = clean.dim();
    check_dim(d, truth.dim())?;
    spec.validate(d)?;
    let cloud = clean.cloud();
    let rows = cloud.active_indices();
    let n = rows.len();
    let k = match spec.adversary {
        Adversary::None => 0,
        _ => corruption_count(spec.epsilon, n),
    };
    if 2 * k > n {
        return Err(invalid(format!("{k} corrupted points exceed half of n = {n}")));
    }
    let map = truth.to_affine_map()?;
    let inv = map.inverse()?;
    let mut rng = rng_from_seed(spec.seed);

    let deleted: Vec<usize> = match spec.adversary {
        Adversary::DeleteOnly { facet } => deepest_along(cloud, &rows, &inv, facet, k),
        _ => {
            let mut pool = rows.clone();
            let (chosen, _) = pool.partial_shuffle(&mut rng, k);
            let mut v = chosen.to_vec();
            v.sort_unstable();
            v
        }
    };
    let outliers = match spec.adversary {
        Adversary::DeleteOnly { .. } | Adversary::None => Vec::new(),
        _ => generate_outliers(&spec.adversary, spec.epsilon, n, k, &map, truth, &mut rng)?,
    };

    let mut is_deleted = vec![false; cloud.len()];
    for &i in &deleted {
        is_deleted[i] = true;
    }
    // (source, label): source < len is a clean row, otherwise an outlier.
    let mut order: Vec<(usize, TruthLabel)> = rows
        .iter()
        .filter(|&&i| !is_deleted[i])
        .map(|&i| (i, clean.labels()[i]))
        .chain((0..outliers.len() / d.max(1)).map(|j| (cloud.len() + j, TruthLabel::Outlier)))
        .collect();
    order.shuffle(&mut rng);

    let mut coords = Vec::with_capacity(cloud.len() * d + outliers.len());
    let mut labels = Vec::with_capacity(order.len() + deleted.len());
    let mut active = Vec::with_capacity(order.len() + deleted.len());
    for &(src, label) in &order {
        if src < cloud.len() {
            coords.extend_from_slice(cloud.point(src));
        } else {
            let j = src - cloud.len();
            coords.extend_from_slice(&outliers[j * d..(j + 1) * d]);
        }
        labels.push(label);
        active.push(true);
    }
    for &i in &deleted {
        coords.extend_from_slice(cloud.point(i));
        labels.push(TruthLabel::DeletedByAdversary);
        active.push(false);
    }
    for i in 0..cloud.len() {
        if !cloud.is_active(i) {
            coords.extend_from_slice(cloud.point(i));
            labels.push(clean.labels()[i]);
            active.push(false);
        }
    }
    SampleSet::new(Cloud::new(d, coords)?.with_active(active)?, labels)
}

fn deepest_along(cloud: &Cloud, rows: &[usize], inv: &AffineMap, facet: usize, k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = rows.iter().map(|&i| (inv.apply(cloud.point(i))[facet], i)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut v: Vec<usize> = scored.into_iter().take(k).map(|(_, i)| i).collect();
    v.sort_unstable();
    v
}

fn uniform_pm1(rng: &mut Rng) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

/// Upper bound on the distance from the center to any point of the body.
fn circumradius_bound(map: &AffineMap) -> f64 {
    let m = map.matrix();
    (0..m.ncols()).map(|j| m.column(j).norm()).sum()
}

fn generate_outliers(
    adversary: &Adversary,
    eps: f64,
    n: usize,
    k: usize,
    map: &AffineMap,
    truth: &Parallelopiped,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let d = truth.dim();
    let mut out = Vec::with_capacity(k * d);
    let mut s = vec![0.0; d];
    let mut x = vec![0.0; d];
    match *adversary {
        Adversary::CornerShift { spread } => {
            for _ in 0..k {
                let t = 1.0 + spread * (1.0 - rng.random::<f64>());
                s.iter_mut().for_each(|v| *v = t);
                map.apply_into(&s, &mut x);
                out.extend_from_slice(&x);
            }
        }
        Adversary::FacetCluster { facet, negative, width } => {
            let sign = if negative { -1.0 } else { 1.0 };
            for _ in 0..k {
                for v in s.iter_mut() {
                    *v = uniform_pm1(rng);
                }
                s[facet] = sign * (1.0 + width * (1.0 - rng.random::<f64>()));
                map.apply_into(&s, &mut x);
                out.extend_from_slice(&x);
            }
        }
        Adversary::BandIntersection { multiplier, k1, k2 } => {
            let (k1, k2) = (k1.unwrap_or(d), k2.unwrap_or(d));
            let threshold = 10.0 * (k1 * k2) as f64 * eps * eps / (d * d) as f64 * n as f64;
            let cluster = ((multiplier * threshold).ceil() as usize).max(1);
            let depth1 = 2.0 * k1 as f64 * eps / d as f64;
            let depth2 = 2.0 * k2 as f64 * eps / d as f64;
            let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
            let mut placed = 0;
            let mut p = 0;
            while placed < k {
                let (i, j) = pairs[p % pairs.len()];
                let m = cluster.min(k - placed);
                for _ in 0..m {
                    for v in s.iter_mut() {
                        *v = uniform_pm1(rng);
                    }
                    s[i] = 1.0 - depth1 * rng.random::<f64>();
                    s[j] = 1.0 - depth2 * rng.random::<f64>();
                    map.apply_into(&s, &mut x);
                    out.extend_from_slice(&x);
                }
                placed += m;
                p += 1;
            }
        }
        Adversary::FarUniform { radius } => {
            if radius <= circumradius_bound(map) {
                return Err(invalid(format!(
                    "far_uniform radius {radius} does not clear the body (circumradius bound {})",
                    circumradius_bound(map)
                )));
            }
            let center = map.shift();
            for _ in 0..k {
                let dir: Vec<f64> = loop {
                    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let r = norm(&g);
                    if r > 1e-12 {
                        break g.iter().map(|v| v / r).collect();
                    }
                };
                out.extend(center.iter().zip(&dir).map(|(c, u)| c + radius * u));
            }
        }
        Adversary::None | Adversary::DeleteOnly { .. } => {}
    }
    Ok(out)
}
