//! Exact checks of the intersection-sum bound for set systems and of the
//! sum bound for almost pairwise independent indicators, with random
//! instance generators.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::{rng_from_seed, splitmix64};

/// `d` subsets of the ground set `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSystem {
    n: usize,
    sets: Vec<Vec<usize>>,
}

impl SetSystem {
    /// Sorts and deduplicates each set.
    pub fn new(n: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("ground set must be non-empty"));
        }
        let mut out = Vec::with_capacity(sets.len());
        for mut s in sets {
            s.sort_unstable();
            s.dedup();
            if s.last().is_some_and(|&x| x >= n) {
                return Err(invalid(format!("set element outside ground set of size {n}")));
            }
            out.push(s);
        }
        Ok(Self { n, sets: out })
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn frac(&self, i: usize) -> f64 {
        self.sets[i].len() as f64 / self.n as f64
    }

    pub fn intersection_size(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.sets[i], &self.sets[j]);
        let (mut p, mut q, mut c) = (0, 0, 0);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        c
    }

    pub fn union_size(&self) -> usize {
        let mut seen = vec![false; self.n];
        for s in &self.sets {
            for &x in s {
                seen[x] = true;
            }
        }
        seen.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub applicable: bool,
    pub holds: bool,
    pub lhs: f64,
    /// `+∞` when the bound's denominator is not positive.
    pub rhs: f64,
}

/// With `ε = frac(∪S_i)`: applicable iff `αε < 1` and
/// `frac(S_i∩S_j) ≤ α·frac(S_i)·frac(S_j)` for all `i ≠ j`; then checks
/// `Σ frac(S_i) ≤ ε/(1 − αε)`.
pub fn intersection_sum_check(sys: &SetSystem, alpha: f64) -> Result<BoundCheck> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha must be positive"));
    }
    let n = sys.n as u128;
    let d = sys.sets.len();
    let union = sys.union_size() as u128;
    let total: u128 = sys.sets.iter().map(|s| s.len() as u128).sum();
    let eps = union as f64 / n as f64;
    let lhs = total as f64 / n as f64;
    let mut applicable = alpha * (union as f64) < n as f64;
    'pairs: for i in 0..d {
        for j in i + 1..d {
            let inter = sys.intersection_size(i, j) as u128;
            let prod = (sys.sets[i].len() as u128 * sys.sets[j].len() as u128) as f64;
            if (inter * n) as f64 > alpha * prod {
                applicable = false;
                break 'pairs;
            }
        }
    }
    let denom = 1.0 - alpha * eps;
    let rhs = if denom > 0.0 { eps / denom } else { f64::INFINITY };
    // Σ|S_i|·(n − α|U|) ≤ |U|·n, with the only rounding in the α product.
    let holds = !applicable || (total as f64) * (n as f64 - alpha * union as f64) <= (union * n) as f64;
    Ok(BoundCheck { applicable, holds, lhs, rhs })
}

/// Rows of `samples` are draws of `X ∈ {0,1}^d`. Applicable iff
/// `E X_i X_j ≤ ε E X_i E X_j` for all `i ≠ j`; then checks `Σ E X_i ≤ 1/(1 − ε)`.
pub fn pairwise_expectation_check(samples: &[Vec<bool>], eps: f64) -> Result<BoundCheck> {
    if !(0.0..1.0).contains(&eps) {
        return Err(invalid("eps must lie in [0, 1)"));
    }
    let m = samples.len();
    let d = samples.first().map_or(0, |r| r.len());
    if samples.iter().any(|r| r.len() != d) {
        return Err(invalid("rows of the indicator matrix differ in length"));
    }
    let rhs = 1.0 / (1.0 - eps);
    if m == 0 {
        return Ok(BoundCheck { applicable: true, holds: true, lhs: 0.0, rhs });
    }
    let mut single = vec![0u64; d];
    let mut pair = vec![0u64; d * d];
    for r in samples {
        let on: Vec<usize> = (0..d).filter(|&i| r[i]).collect();
        for (a, &i) in on.iter().enumerate() {
            single[i] += 1;
            for &j in &on[a + 1..] {
                pair[i * d + j] += 1;
            }
        }
    }
    let m128 = m as u128;
    let mut applicable = true;
    'pairs: for i in 0..d {
        for j in i + 1..d {
            // c_ij/m ≤ ε (c_i/m)(c_j/m)  ⇔  c_ij·m ≤ ε·c_i·c_j
            if (pair[i * d + j] as u128 * m128) as f64 > eps * (single[i] as f64 * single[j] as f64) {
                applicable = false;
                break 'pairs;
            }
        }
    }
    let total: u64 = single.iter().sum();
    let lhs = total as f64 / m as f64;
    // Σc_i/m ≤ 1/(1−ε)  ⇔  Σc_i·(1−ε) ≤ m
    let holds = !applicable || total as f64 * (1.0 - eps) <= m as f64;
    Ok(BoundCheck { applicable, holds, lhs, rhs })
}

/// Parameters of the random instance generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSuiteConfig {
    pub instances: usize,
    pub ground_size: usize,
    pub max_sets: usize,
    /// Union fraction is drawn from `[0, max_union]`.
    pub max_union: f64,
    /// Chance that a point of the union joins one extra set.
    pub overlap: f64,
    pub max_alpha: f64,
    /// Rows of each indicator matrix.
    pub rows: usize,
    /// Chance that an indicator row is all zero.
    pub zero_row: f64,
}

impl Default for LemmaSuiteConfig {
    fn default() -> Self {
        Self {
            instances: 10_000,
            ground_size: 1000,
            max_sets: 20,
            max_union: 0.1,
            overlap: 0.02,
            max_alpha: 1000.0,
            rows: 500,
            zero_row: 0.3,
        }
    }
}

impl LemmaSuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.ground_size == 0 || self.max_sets < 2 || self.rows == 0 {
            return Err(invalid("suite sizes must be positive and allow two sets"));
        }
        for (name, v) in [("max_union", self.max_union), ("overlap", self.overlap), ("zero_row", self.zero_row)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.max_alpha >= 1.0) {
            return Err(invalid("max_alpha must be at least 1"));
        }
        Ok(())
    }
}

/// Random system: each point of a random union gets a primary set and, with
/// probability `overlap`, one more.
pub fn random_set_system(cfg: &LemmaSuiteConfig, seed: u64) -> SetSystem {
    let mut rng = rng_from_seed(seed);
    let n = cfg.ground_size;
    let d = rng.random_range(2..=cfg.max_sets);
    let union = ((rng.random::<f64>() * cfg.max_union * n as f64) as usize).max(1).min(n);
    let mut ground: Vec<usize> = (0..n).collect();
    ground.shuffle(&mut rng);
    // Skewed set weights so sizes differ.
    let weights: Vec<f64> = (0..d).map(|_| rng.random::<f64>().powi(2) + 0.05).collect();
    let wsum: f64 = weights.iter().sum();
    let pick = |rng: &mut crate::seed::Rng| {
        let mut u = rng.random::<f64>() * wsum;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return k;
            }
            u -= w;
        }
        d - 1
    };
    let mut sets = vec![Vec::new(); d];
    for &x in &ground[..union] {
        let k = pick(&mut rng);
        sets[k].push(x);
        if rng.random::<f64>() < cfg.overlap {
            let j = pick(&mut rng);
            if j != k {
                sets[j].push(x);
            }
        }
    }
    SetSystem::new(n, sets).expect("generated elements lie in the ground set")
}

/// Random indicator matrix: each row is zero with probability `zero_row`,
/// otherwise one-hot with an extra coordinate switched on at rate `overlap`.
pub fn random_indicator_matrix(cfg: &LemmaSuiteConfig, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = rng_from_seed(seed);
    let d = rng.random_range(2..=cfg.max_sets);
    (0..cfg.rows)
        .map(|_| {
            let mut row = vec![false; d];
            if rng.random::<f64>() >= cfg.zero_row {
                row[rng.random_range(0..d)] = true;
                if rng.random::<f64>() < cfg.overlap {
                    row[rng.random_range(0..d)] = true;
                }
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub instances: usize,
    pub applicable: usize,
    pub violations: usize,
    /// Largest `lhs/rhs` over applicable instances.
    pub max_ratio: f64,
}

impl SuiteSummary {
    fn collect(checks: &[BoundCheck]) -> Self {
        let app: Vec<&BoundCheck> = checks.iter().filter(|c| c.applicable).collect();
        Self {
            instances: checks.len(),
            applicable: app.len(),
            violations: app.iter().filter(|c| !c.holds).count(),
            max_ratio: app.iter().map(|c| c.lhs / c.rhs).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub config: LemmaSuiteConfig,
    pub seed: u64,
    pub intersection_sum: SuiteSummary,
    pub pairwise_expectation: SuiteSummary,
}

impl LemmaSuiteReport {
    pub fn passed(&self) -> bool {
        self.intersection_sum.violations == 0 && self.pairwise_expectation.violations == 0
    }
}

/// Runs both checks on `cfg.instances` random instances each. `α` for a set
/// system is the smallest value (capped at `max_alpha`) making it
/// applicable, so most instances exercise the bound near its edge; the
/// indicator ε is chosen the same way.
pub fn run_lemma_suite(cfg: &LemmaSuiteConfig, seed: u64) -> Result<LemmaSuiteReport> {
    cfg.validate()?;
    let sets: Vec<BoundCheck> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let sys = random_set_system(cfg, splitmix64(seed ^ splitmix64(2 * k as u64)));
            let alpha = tightest_alpha(&sys).clamp(1e-9, cfg.max_alpha);
            intersection_sum_check(&sys, alpha)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<BoundCheck> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let m = random_indicator_matrix(cfg, splitmix64(seed ^ splitmix64(2 * k as u64 + 1)));
            let eps = tightest_eps(&m).clamp(0.0, 1.0 - 1e-9);
            pairwise_expectation_check(&m, eps)
        })
        .collect::<Result<_>>()?;
    Ok(LemmaSuiteReport {
        config: cfg.clone(),
        seed,
        intersection_sum: SuiteSummary::collect(&sets),
        pairwise_expectation: SuiteSummary::collect(&pairs),
    })
}

/// Smallest α satisfying every pairwise condition (0 for disjoint sets).
fn tightest_alpha(sys: &SetSystem) -> f64 {
    let d = sys.sets.len();
    let mut a: f64 = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let inter = sys.intersection_size(i, j);
            if inter > 0 {
                let prod = sys.sets[i].len() as f64 * sys.sets[j].len() as f64;
                a = a.max(inter as f64 * sys.n as f64 / prod);
            }
        }
    }
    a
}

fn tightest_eps(m: &[Vec<bool>]) -> f64 {
    let rows = m.len() as f64;
    let d = m.first().map_or(0, |r| r.len());
    let mut single = vec![0f64; d];
    let mut pair = vec![0f64; d * d];
    for r in m {
        for i in 0..d {
            if r[i] {
                single[i] += 1.0;
                for j in i + 1..d {
                    if r[j] {
                        pair[i * d + j] += 1.0;
                    }
                }
            }
        }
    }
    let mut e: f64 = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            if pair[i * d + j] > 0.0 {
                e = e.max(pair[i * d + j] * rows / (single[i] * single[j]));
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_sets_meet_the_bound() {
        let sys = SetSystem::new(100, vec![vec![0, 1, 2], vec![3, 4], vec![5]]).unwrap();
        let c = intersection_sum_check(&sys, 5.0).unwrap();
        assert!(c.applicable && c.holds);
        assert!((c.lhs - 0.06).abs() < 1e-15);
    }

    #[test]
    fn pairwise_violation_is_not_applicable() {
        let sys = SetSystem::new(100, vec![vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
        let c = intersection_sum_check(&sys, 1.0).unwrap();
        assert!(!c.applicable);
        assert!(c.holds);
    }

    #[test]
    fn out_of_range_elements_are_rejected() {
        assert!(SetSystem::new(3, vec![vec![3]]).is_err());
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let m: Vec<Vec<bool>> = (0..9).map(|r| (0..3).map(|c| c == r % 3).collect()).collect();
        let c = pairwise_expectation_check(&m, 0.0).unwrap();
        assert!(c.applicable && c.holds);
        assert!((c.lhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_holds_vacuously() {
        let m = vec![vec![false; 4]; 10];
        let c = pairwise_expectation_check(&m, 0.5).unwrap();
        assert!(c.applicable && c.holds && c.lhs == 0.0);
    }

    #[test]
    fn tight_alpha_makes_systems_applicable() {
        let cfg = LemmaSuiteConfig::default();
        let sys = random_set_system(&cfg, 11);
        let c = intersection_sum_check(&sys, tightest_alpha(&sys).max(1e-9)).unwrap();
        let eps = sys.union_size() as f64 / sys.ground_size() as f64;
        assert_eq!(c.applicable, tightest_alpha(&sys) * eps < 1.0);
    }

    #[test]
    fn small_suite_has_no_violations() {
        let cfg = LemmaSuiteConfig { instances: 300, ..Default::default() };
        let r = run_lemma_suite(&cfg, 3).unwrap();
        assert!(r.passed());
        assert!(r.intersection_sum.applicable > 150, "{r:?}");
        assert!(r.pairwise_expectation.applicable > 150, "{r:?}");
    }
}
