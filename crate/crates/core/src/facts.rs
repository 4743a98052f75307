//! Monte-Carlo checks of the geometric facts about uniform cube samples
//! that the estimators rely on. Each fact runs over random configurations
//! and compares an estimate against its stated bound with a slack of a few
//! standard errors.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dot, normalized};
use crate::seed::{derive_seed, rng_from_seed, splitmix64, Rng};

const MC_CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactsConfig {
    pub configs_per_fact: usize,
    pub dims: Vec<usize>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub mc_budget: usize,
    /// Allowed deviation in standard errors.
    pub se_slack: f64,
    /// Slab width used to estimate section volumes.
    pub section_width: f64,
}

impl Default for FactsConfig {
    fn default() -> Self {
        Self {
            configs_per_fact: 20,
            dims: vec![2, 5, 10],
            delta_min: 0.01,
            delta_max: 0.3,
            mc_budget: 1_000_000,
            se_slack: 3.0,
            section_width: 0.01,
        }
    }
}

impl FactsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.configs_per_fact == 0 || self.mc_budget == 0 {
            return Err(invalid("facts suite needs configurations and samples"));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return Err(invalid("facts dims must all be at least 2"));
        }
        if !(0.0 < self.delta_min && self.delta_min <= self.delta_max && self.delta_max < 1.0) {
            return Err(invalid("need 0 < delta_min <= delta_max < 1"));
        }
        if !(self.se_slack >= 0.0 && self.section_width > 0.0) {
            return Err(invalid("se_slack must be non-negative and section_width positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    /// Value is reported only.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheck {
    pub d: usize,
    /// Distance `‖a − e_i‖`, or 0 where the configuration has none.
    pub delta: f64,
    /// Second parameter (threshold, offset), fact specific.
    pub param: f64,
    pub value: f64,
    pub stderr: f64,
    pub bound: f64,
    pub relation: Relation,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSummary {
    pub name: String,
    pub asserted: bool,
    pub passed: bool,
    /// Fitted constant for reported facts.
    pub fitted: Option<f64>,
    pub checks: Vec<FactCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsReport {
    pub config: FactsConfig,
    pub seed: u64,
    pub facts: Vec<FactSummary>,
}

impl FactsReport {
    pub fn passed(&self) -> bool {
        self.facts.iter().all(|f| f.passed)
    }

    pub fn fact(&self, name: &str) -> Option<&FactSummary> {
        self.facts.iter().find(|f| f.name == name)
    }
}

/// Sums `k` statistics of `m` uniform points on `[-half, half]^d`; chunks
/// are merged in a fixed order so results are reproducible.
fn cube_sums<F>(d: usize, m: usize, seed: u64, half: f64, k: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunks = m.div_ceil(MC_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(splitmix64(seed ^ splitmix64(c as u64)));
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut x = vec![0.0; d];
            let mut acc = vec![0.0; k];
            for _ in 0..len {
                for v in x.iter_mut() {
                    *v = half * (2.0 * rng.random::<f64>() - 1.0);
                }
                f(&x, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; k];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

fn proportion(count: f64, m: usize) -> (f64, f64) {
    let p = count / m as f64;
    (p, (p * (1.0 - p) / m as f64).sqrt())
}

/// Mean and its standard error from `[k, Σy, Σy²]`.
fn mean_se(s: &[f64]) -> (f64, f64) {
    let k = s[0].max(1.0);
    let mean = s[1] / k;
    let var = (s[2] / k - mean * mean).max(0.0);
    (mean, (var / k).sqrt())
}

fn random_unit(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&g) {
            return u;
        }
    }
}

/// Unit vector at chord distance `delta` from `e_i`, tilted in a random
/// direction orthogonal to it.
fn tilted_axis(d: usize, i: usize, delta: f64, rng: &mut Rng) -> Vec<f64> {
    let mut w = random_unit(d, rng);
    w[i] = 0.0;
    let w = normalized(&w).unwrap_or_else(|| {
        let mut v = vec![0.0; d];
        v[(i + 1) % d] = 1.0;
        v
    });
    let th = 2.0 * (delta / 2.0).asin();
    let mut a: Vec<f64> = w.iter().map(|x| th.sin() * x).collect();
    a[i] = th.cos();
    a
}

struct Draw {
    d: usize,
    i: usize,
    delta: f64,
    rng: Rng,
    seed: u64,
}

fn draws(cfg: &FactsConfig, seed: u64, name: &str) -> Vec<Draw> {
    let base = derive_seed(seed, name);
    (0..cfg.configs_per_fact)
        .map(|k| {
            let s = splitmix64(base ^ splitmix64(k as u64));
            let mut rng = rng_from_seed(s);
            let d = cfg.dims[k % cfg.dims.len()];
            let i = rng.random_range(0..d);
            let delta = cfg.delta_min + (cfg.delta_max - cfg.delta_min) * rng.random::<f64>();
            Draw { d, i, delta, rng, seed: splitmix64(s) }
        })
        .collect()
}

fn check(
    d: usize,
    delta: f64,
    param: f64,
    (value, stderr): (f64, f64),
    bound: f64,
    relation: Relation,
    slack: f64,
) -> FactCheck {
    let holds = match relation {
        Relation::AtMost => value <= bound + slack * stderr,
        Relation::AtLeast => value >= bound - slack * stderr,
        Relation::Report => true,
    };
    FactCheck { d, delta, param, value, stderr, bound, relation, holds }
}

fn summary(name: &str, checks: Vec<FactCheck>, fitted: Option<f64>) -> FactSummary {
    let asserted = checks.iter().any(|c| c.relation != Relation::Report);
    FactSummary { name: name.into(), asserted, passed: checks.iter().all(|c| c.holds), fitted, checks }
}

/// `{|x·a| > 1}` on `[-1,1]^d` holds between `δ/5` and `(1+δ)δ/4` of the mass.
pub fn escape_fraction_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "escape_fraction";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = tilted_axis(dr.d, dr.i, dr.delta, &mut dr.rng);
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 1.0, 1, |x, acc| {
            if dot(x, &a).abs() > 1.0 {
                acc[0] += 1.0;
            }
        });
        let est = proportion(s[0], cfg.mc_budget);
        let delta = dr.delta;
        checks.push(check(dr.d, delta, 1.0, est, delta / 5.0, Relation::AtLeast, cfg.se_slack));
        checks.push(check(dr.d, delta, 1.0, est, (1.0 + delta) * delta / 4.0, Relation::AtMost, cfg.se_slack));
    }
    summary(name, checks, None)
}

/// On the volume-one cube, `{|x·a| > t/2}` has mass at most `1 − t` for `t ≤ 3/4`.
pub fn slab_volume_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "slab_volume";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = random_unit(dr.d, &mut dr.rng);
        let t = 0.75 * dr.rng.random::<f64>();
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 0.5, 1, |x, acc| {
            if dot(x, &a).abs() > t / 2.0 {
                acc[0] += 1.0;
            }
        });
        checks.push(check(dr.d, 0.0, t, proportion(s[0], cfg.mc_budget), 1.0 - t, Relation::AtMost, cfg.se_slack));
    }
    summary(name, checks, None)
}

/// The mean of `{x·a > 1}` satisfies `μ·e_i ≤ 1 − δ/32`.
pub fn mean_projection_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "mean_projection";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = tilted_axis(dr.d, dr.i, dr.delta, &mut dr.rng);
        let i = dr.i;
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 1.0, 3, |x, acc| {
            if dot(x, &a) > 1.0 {
                acc[0] += 1.0;
                acc[1] += x[i];
                acc[2] += x[i] * x[i];
            }
        });
        checks.push(check(dr.d, dr.delta, 1.0, mean_se(&s), 1.0 - dr.delta / 32.0, Relation::AtMost, cfg.se_slack));
    }
    summary(name, checks, None)
}

/// `{|x·a| > 1 + δ/2}` holds at least `δ/64` of the mass.
pub fn tail_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "tail";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = tilted_axis(dr.d, dr.i, dr.delta, &mut dr.rng);
        let thr = 1.0 + dr.delta / 2.0;
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 1.0, 1, |x, acc| {
            if dot(x, &a).abs() > thr {
                acc[0] += 1.0;
            }
        });
        checks.push(check(
            dr.d,
            dr.delta,
            thr,
            proportion(s[0], cfg.mc_budget),
            dr.delta / 64.0,
            Relation::AtLeast,
            cfg.se_slack,
        ));
    }
    summary(name, checks, None)
}

/// For `Δ ∈ {−δ/2, 0, δ/2}` the mean of `{x·a > 1 + Δ}` satisfies
/// `μ·a − μ·e_i ≥ δ/64`.
pub fn mean_gap_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "mean_gap";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = tilted_axis(dr.d, dr.i, dr.delta, &mut dr.rng);
        let mut diff = a.clone();
        diff[dr.i] -= 1.0;
        let offs = [-dr.delta / 2.0, 0.0, dr.delta / 2.0];
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 1.0, 9, |x, acc| {
            let p = dot(x, &a);
            let y = dot(x, &diff);
            for (k, off) in offs.iter().enumerate() {
                if p > 1.0 + off {
                    acc[3 * k] += 1.0;
                    acc[3 * k + 1] += y;
                    acc[3 * k + 2] += y * y;
                }
            }
        });
        for (k, off) in offs.iter().enumerate() {
            let est = mean_se(&s[3 * k..3 * k + 3]);
            checks.push(check(dr.d, dr.delta, *off, est, dr.delta / 64.0, Relation::AtLeast, cfg.se_slack));
        }
    }
    summary(name, checks, None)
}

/// Sections `{x·a = t}` of the volume-one cube have (d−1)-volume at most √2;
/// estimated by the mass of a thin slab divided by its width. Runs in
/// `d ∈ {2, 3}`.
pub fn section_volume_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "section_volume";
    let h = cfg.section_width;
    let mut checks = Vec::new();
    for (k, mut dr) in draws(cfg, seed, name).into_iter().enumerate() {
        let d = 2 + k % 2;
        // Half the configurations probe the diagonal, where the bound is tight in d = 2.
        let a = if k % 4 < 2 { vec![1.0 / (d as f64).sqrt(); d] } else { random_unit(d, &mut dr.rng) };
        let t = 0.1 * dr.rng.random::<f64>();
        let s = cube_sums(d, cfg.mc_budget, dr.seed, 0.5, 1, |x, acc| {
            if (dot(x, &a) - t).abs() < h / 2.0 {
                acc[0] += 1.0;
            }
        });
        let (p, se) = proportion(s[0], cfg.mc_budget);
        checks.push(check(d, 0.0, t, (p / h, se / h), 2f64.sqrt(), Relation::AtMost, cfg.se_slack));
    }
    summary(name, checks, None)
}

/// `E(x·a | x·a ≥ t) − t` for `t ∈ [0, 1/2]` on `[-1,1]^d`; the fitted
/// constant is the smallest value seen and must be positive.
pub fn truncated_mean_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "truncated_mean";
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let a = random_unit(dr.d, &mut dr.rng);
        let t = 0.5 * dr.rng.random::<f64>();
        let s = cube_sums(dr.d, cfg.mc_budget, dr.seed, 1.0, 3, |x, acc| {
            let p = dot(x, &a);
            if p >= t {
                acc[0] += 1.0;
                acc[1] += p - t;
                acc[2] += (p - t) * (p - t);
            }
        });
        checks.push(check(dr.d, 0.0, t, mean_se(&s), 0.0, Relation::AtLeast, 0.0));
    }
    let fitted = checks.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let mut out = summary(name, checks, Some(fitted));
    out.passed &= fitted > 0.0;
    out
}

/// Smallest `a ≥ 0` past which the marginal density of `x·u` drops below
/// half its peak, from a histogram of `proj`.
fn half_peak_cut(proj: &mut [f64]) -> f64 {
    let bin = 0.05;
    let max = proj.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nb = (max / bin).ceil() as usize + 1;
    let mut hist = vec![0usize; nb];
    for v in proj.iter() {
        hist[((v.abs()) / bin) as usize] += 1;
    }
    let peak = *hist.iter().max().unwrap_or(&0);
    let mut last = 0;
    for (k, &c) in hist.iter().enumerate() {
        if 2 * c >= peak {
            last = k;
        } else {
            break;
        }
    }
    last as f64 * bin
}

/// Bands `{u·x ≥ a_u}`, `{v·x ≥ a_v}` on the isotropic cube with
/// `|u·v| ≤ 1/2` and cuts where the marginal density is at least half its
/// peak: reports `C = ν(H_u∩H_v)/(ν(H_u)ν(H_v))`, fitted as the maximum.
pub fn band_intersection_fact(cfg: &FactsConfig, seed: u64) -> FactSummary {
    let name = "band_intersection";
    let half = 3f64.sqrt();
    let mut checks = Vec::new();
    for mut dr in draws(cfg, seed, name) {
        let d = dr.d;
        let u = random_unit(d, &mut dr.rng);
        let v = loop {
            let v = random_unit(d, &mut dr.rng);
            if dot(&u, &v).abs() <= 0.5 {
                break v;
            }
        };
        let pilot = 100_000.min(cfg.mc_budget);
        let mut pu = Vec::with_capacity(pilot);
        let mut pv = Vec::with_capacity(pilot);
        let mut prng = rng_from_seed(dr.rng.random());
        let mut x = vec![0.0; d];
        for _ in 0..pilot {
            for c in x.iter_mut() {
                *c = half * (2.0 * prng.random::<f64>() - 1.0);
            }
            pu.push(dot(&x, &u));
            pv.push(dot(&x, &v));
        }
        let au = half_peak_cut(&mut pu) * dr.rng.random::<f64>();
        let av = half_peak_cut(&mut pv) * dr.rng.random::<f64>();
        let s = cube_sums(d, cfg.mc_budget, dr.seed, half, 3, |x, acc| {
            let a = dot(x, &u) >= au;
            let b = dot(x, &v) >= av;
            acc[0] += a as u8 as f64;
            acc[1] += b as u8 as f64;
            acc[2] += (a && b) as u8 as f64;
        });
        let m = cfg.mc_budget as f64;
        let (fu, fv, fi) = (s[0] / m, s[1] / m, s[2] / m);
        let c = fi / (fu * fv);
        // Delta-method error of the ratio, ignoring covariance terms.
        let se = c * ((1.0 - fi) / (fi * m) + (1.0 - fu) / (fu * m) + (1.0 - fv) / (fv * m)).sqrt();
        checks.push(check(d, 0.0, au.max(av), (c, se), f64::NAN, Relation::Report, 0.0));
    }
    let fitted = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    summary(name, checks, Some(fitted))
}

/// Names accepted by [`run_facts`].
pub const FACT_NAMES: [&str; 8] = [
    "escape_fraction",
    "slab_volume",
    "mean_projection",
    "tail",
    "mean_gap",
    "section_volume",
    "truncated_mean",
    "band_intersection",
];

/// Runs the named facts (all when `only` is empty).
pub fn run_facts(cfg: &FactsConfig, seed: u64, only: &[String]) -> Result<FactsReport> {
    cfg.validate()?;
    if let Some(bad) = only.iter().find(|n| !FACT_NAMES.contains(&n.as_str())) {
        return Err(invalid(format!("unknown fact {bad:?}")));
    }
    let want = |n: &str| only.is_empty() || only.iter().any(|o| o == n);
    let mut facts = Vec::new();
    for name in FACT_NAMES {
        if !want(name) {
            continue;
        }
        facts.push(match name {
            "escape_fraction" => escape_fraction_fact(cfg, seed),
            "slab_volume" => slab_volume_fact(cfg, seed),
            "mean_projection" => mean_projection_fact(cfg, seed),
            "tail" => tail_fact(cfg, seed),
            "mean_gap" => mean_gap_fact(cfg, seed),
            "section_volume" => section_volume_fact(cfg, seed),
            "truncated_mean" => truncated_mean_fact(cfg, seed),
            _ => band_intersection_fact(cfg, seed),
        });
    }
    Ok(FactsReport { config: cfg.clone(), seed, facts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilted_axis_has_requested_chord() {
        let mut rng = rng_from_seed(1);
        for d in [2, 5, 10] {
            let a = tilted_axis(d, d - 1, 0.2, &mut rng);
            let mut e = vec![0.0; d];
            e[d - 1] = 1.0;
            assert!((crate::linalg::distance(&a, &e) - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn cube_sums_are_reproducible() {
        let f = |x: &[f64], acc: &mut [f64]| acc[0] += x[0];
        assert_eq!(cube_sums(3, 100_000, 7, 1.0, 1, f), cube_sums(3, 100_000, 7, 1.0, 1, f));
    }

    #[test]
    fn axis_slab_meets_the_bound_with_equality() {
        let cfg = FactsConfig::default();
        let a = [1.0, 0.0];
        let s = cube_sums(2, 400_000, 3, 0.5, 1, |x, acc| {
            if dot(x, &a).abs() > 0.25 {
                acc[0] += 1.0;
            }
        });
        let (p, se) = proportion(s[0], 400_000);
        assert!((p - 0.5).abs() <= cfg.se_slack * se);
    }

    #[test]
    fn unknown_fact_is_rejected() {
        assert!(run_facts(&FactsConfig::default(), 1, &["nope".into()]).is_err());
    }

    #[test]
    fn small_suite_passes_for_small_tilts() {
        // The escape-fraction lower bound δ/5 is only reliable for small δ.
        let cfg = FactsConfig { configs_per_fact: 3, mc_budget: 200_000, delta_max: 0.1, ..Default::default() };
        let r = run_facts(&cfg, 5, &[]).unwrap();
        for f in &r.facts {
            assert!(f.passed, "{}: {:?}", f.name, f.checks.iter().filter(|c| !c.holds).collect::<Vec<_>>());
        }
    }
}
