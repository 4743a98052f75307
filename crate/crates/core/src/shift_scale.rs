//! Axis-aligned box recovery: robust range finding followed by boundary
//! updates driven by one- and two-dimensional slab density certificates.
//!
//! For a box with sides `[l_i, u_i]` let `w_i = (ε/d)(u_i − l_i)`. The top
//! slab `S⁺_{i,k}` holds the points of the box with `x_i ≥ u_i − k·w_i`, the
//! bottom slab `S⁻_{i,k}` those with `x_i ≤ l_i + k·w_i`, for `k ∈ 1..=d`.
//! The certificate asks that every slab holds at least `kε/(2d)·n` points
//! and that every pairwise intersection `S^±_{i,k1} ∩ S^±_{j,k2}` holds at
//! most `10·k1·k2·ε²/d²·n`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{AxisBox, Cloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftScaleConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    /// Minimum sample size is `⌈n_min_factor·d²/ε²⌉`.
    pub n_min_factor: f64,
    /// At most `⌈iteration_cap_factor·d²/ε⌉` updates and deletions.
    pub iteration_cap_factor: f64,
    /// Two-dimensional deletions stop once `deletion_budget·ε·n` points are gone.
    pub deletion_budget: f64,
    /// The range-finding window is widened about its center by this factor.
    pub range_expansion: f64,
}

impl Default for ShiftScaleConfig {
    fn default() -> Self {
        Self {
            eps_min: 1e-3,
            eps_max: 0.2,
            n_min_factor: 5.0,
            iteration_cap_factor: 10.0,
            deletion_budget: 2.0,
            range_expansion: 4.0,
        }
    }
}

impl ShiftScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_min > 0.0 && self.eps_min <= self.eps_max && self.eps_max < 0.5) {
            return Err(invalid("shift_scale needs 0 < eps_min <= eps_max < 0.5"));
        }
        if !(self.n_min_factor >= 0.0 && self.iteration_cap_factor > 0.0 && self.deletion_budget >= 0.0) {
            return Err(invalid("shift_scale factors must be non-negative"));
        }
        if !(self.range_expansion >= 1.0) {
            return Err(invalid("range_expansion must be at least 1"));
        }
        Ok(())
    }

    pub fn n_min(&self, d: usize, eps: f64) -> usize {
        (self.n_min_factor * (d * d) as f64 / (eps * eps)).ceil() as usize
    }

    pub fn iteration_cap(&self, d: usize, eps: f64) -> usize {
        (self.iteration_cap_factor * (d * d) as f64 / eps).ceil() as usize
    }
}

/// One boundary move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryUpdate {
    pub coordinate: usize,
    pub upper: bool,
    pub k: usize,
    pub from: f64,
    pub to: f64,
}

/// Points removed for over-filling a slab intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deletion {
    pub i: usize,
    pub j: usize,
    pub k1: usize,
    pub k2: usize,
    pub sign_i: i8,
    pub sign_j: i8,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScaleState {
    pub initial_box: AxisBox,
    pub current_box: AxisBox,
    pub updates: Vec<BoundaryUpdate>,
    pub deletions: Vec<Deletion>,
    /// Boundary updates plus deletion events.
    pub iteration: usize,
    /// Number of active points at entry; all thresholds scale with it.
    pub n_ref: usize,
    #[serde(skip)]
    deleted: Vec<bool>,
}

impl ShiftScaleState {
    /// Fresh state at `bx` with nothing deleted.
    pub fn new(cloud: &Cloud, bx: AxisBox) -> Self {
        Self {
            initial_box: bx.clone(),
            current_box: bx,
            updates: Vec::new(),
            deletions: Vec::new(),
            iteration: 0,
            n_ref: cloud.active_count(),
            deleted: vec![false; cloud.len()],
        }
    }

    pub fn deleted_count(&self) -> usize {
        self.deletions.iter().map(|d| d.indices.len()).sum()
    }

    pub fn is_deleted(&self, i: usize) -> bool {
        self.deleted.get(i).copied().unwrap_or(false)
    }

    pub fn deleted_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.deletions.iter().flat_map(|d| d.indices.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    fn counts(&self, cloud: &Cloud, i: usize) -> bool {
        cloud.is_active(i) && !self.is_deleted(i) && self.current_box.contains_exact(cloud.point(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftScaleStatus {
    /// Every check passed.
    Converged,
    /// The deletion budget ran out; one-dimensional checks pass.
    DeletionBudgetReached,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScaleOutcome {
    pub estimate: AxisBox,
    pub state: ShiftScaleState,
    pub status: ShiftScaleStatus,
    /// All one- and two-dimensional checks pass on the surviving points.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneDCheck {
    pub upper_count: usize,
    pub lower_count: usize,
    pub threshold: f64,
    pub upper_pass: bool,
    pub lower_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoDViolation {
    pub sign_i: i8,
    pub sign_j: i8,
    pub count: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoDCheck {
    pub threshold: f64,
    pub pass: bool,
    pub violations: Vec<TwoDViolation>,
}

impl AxisBox {
    pub(crate) fn contains_exact(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower().iter().zip(self.upper())).all(|(&v, (&l, &u))| v >= l && v <= u)
    }
}

fn slab_width(bx: &AxisBox, i: usize, eps: f64) -> f64 {
    eps / bx.dim() as f64 * bx.side(i)
}

fn upper_cut(bx: &AxisBox, i: usize, k: usize, eps: f64) -> f64 {
    bx.upper()[i] - k as f64 * slab_width(bx, i, eps)
}

fn lower_cut(bx: &AxisBox, i: usize, k: usize, eps: f64) -> f64 {
    bx.lower()[i] + k as f64 * slab_width(bx, i, eps)
}

fn one_d_threshold(d: usize, k: usize, eps: f64, n: usize) -> f64 {
    k as f64 * eps / (2.0 * d as f64) * n as f64
}

fn two_d_threshold(d: usize, k1: usize, k2: usize, eps: f64, n: usize) -> f64 {
    10.0 * (k1 * k2) as f64 * eps * eps / (d * d) as f64 * n as f64
}

/// Smallest `k ∈ 1..=d` whose slab on the given side contains `v`, or 0.
fn depth(bx: &AxisBox, i: usize, v: f64, upper: bool, eps: f64) -> usize {
    let d = bx.dim();
    let w = slab_width(bx, i, eps);
    let inside = |k: usize| {
        if upper {
            v >= upper_cut(bx, i, k, eps)
        } else {
            v <= lower_cut(bx, i, k, eps)
        }
    };
    let dist = if upper { bx.upper()[i] - v } else { v - bx.lower()[i] };
    let mut k = ((dist / w).ceil().max(1.0) as usize).min(d + 1);
    while k > 1 && inside(k - 1) {
        k -= 1;
    }
    while k <= d && !inside(k) {
        k += 1;
    }
    if k > d {
        0
    } else {
        k
    }
}

/// Minimum-length window of `⌈(1/2+ε)n⌉` order statistics per coordinate,
/// widened about its center by `expansion`.
pub fn robust_range_find(cloud: &Cloud, eps: f64, expansion: f64) -> Result<AxisBox> {
    if !(0.0..0.5).contains(&eps) {
        return Err(invalid(format!("eps must lie in [0, 0.5), got {eps}")));
    }
    let rows = cloud.active_indices();
    let n = rows.len();
    let w = ((0.5 + eps) * n as f64).ceil() as usize;
    if w < 2 || n < w {
        return Err(Error::TooFewPoints { needed: w.max(2), found: n });
    }
    let d = cloud.dim();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vec<f64> = rows.iter().map(|&i| cloud.point(i)[j]).collect();
        v.sort_by(f64::total_cmp);
        let mut best = 0;
        for s in 1..=(n - w) {
            if v[s + w - 1] - v[s] < v[best + w - 1] - v[best] {
                best = s;
            }
        }
        let (a, b) = (v[best], v[best + w - 1]);
        if b <= a {
            return Err(Error::Degenerate(format!("coordinate {j}: minimum window has zero length")));
        }
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a) * expansion;
        lower.push(c - h);
        upper.push(c + h);
    }
    AxisBox::new(lower, upper)
}

/// Slab counts for coordinate `i` at grid index `k` against the state's box.
pub fn one_d_density_check(cloud: &Cloud, state: &ShiftScaleState, eps: f64, i: usize, k: usize) -> Result<OneDCheck> {
    let bx = &state.current_box;
    let d = bx.dim();
    if i >= d || k == 0 || k > d {
        return Err(invalid(format!("need coordinate < {d} and 1 <= k <= {d}")));
    }
    let (up, lo) = (upper_cut(bx, i, k, eps), lower_cut(bx, i, k, eps));
    let (mut upper_count, mut lower_count) = (0, 0);
    for r in 0..cloud.len() {
        if state.counts(cloud, r) {
            let v = cloud.point(r)[i];
            upper_count += (v >= up) as usize;
            lower_count += (v <= lo) as usize;
        }
    }
    let threshold = one_d_threshold(d, k, eps, state.n_ref);
    Ok(OneDCheck {
        upper_count,
        lower_count,
        threshold,
        upper_pass: upper_count as f64 >= threshold,
        lower_pass: lower_count as f64 >= threshold,
    })
}

/// Counts of all four sign combinations of `S^±_{i,k1} ∩ S^±_{j,k2}`.
pub fn two_d_density_check(
    cloud: &Cloud,
    state: &ShiftScaleState,
    eps: f64,
    (i, j): (usize, usize),
    (k1, k2): (usize, usize),
) -> Result<TwoDCheck> {
    let bx = &state.current_box;
    let d = bx.dim();
    if i == j || i >= d || j >= d || k1 == 0 || k2 == 0 || k1 > d || k2 > d {
        return Err(invalid("two-dimensional check needs distinct coordinates and 1 <= k <= d"));
    }
    let threshold = two_d_threshold(d, k1, k2, eps, state.n_ref);
    let mut violations = Vec::new();
    for (si, sj) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
        let mut indices = Vec::new();
        for r in 0..cloud.len() {
            if !state.counts(cloud, r) {
                continue;
            }
            let x = cloud.point(r);
            let a = if si > 0 { x[i] >= upper_cut(bx, i, k1, eps) } else { x[i] <= lower_cut(bx, i, k1, eps) };
            let b = if sj > 0 { x[j] >= upper_cut(bx, j, k2, eps) } else { x[j] <= lower_cut(bx, j, k2, eps) };
            if a && b {
                indices.push(r);
            }
        }
        if indices.len() as f64 > threshold {
            violations.push(TwoDViolation { sign_i: si, sign_j: sj, count: indices.len(), indices });
        }
    }
    Ok(TwoDCheck { threshold, pass: violations.is_empty(), violations })
}

/// Whether the state passes every one- and two-dimensional check.
pub fn certificate_holds(cloud: &Cloud, state: &ShiftScaleState, eps: f64) -> Result<bool> {
    let d = state.current_box.dim();
    for i in 0..d {
        for k in 1..=d {
            let c = one_d_density_check(cloud, state, eps, i, k)?;
            if !(c.upper_pass && c.lower_pass) {
                return Ok(false);
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            for k1 in 1..=d {
                for k2 in 1..=d {
                    if !two_d_density_check(cloud, state, eps, (i, j), (k1, k2))?.pass {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, pos: usize, delta: i32) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] = (self.tree[i] as i64 + delta as i64) as u32;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< pos`.
    fn prefix(&self, pos: usize) -> usize {
        let mut i = pos;
        let mut s = 0usize;
        while i > 0 {
            s += self.tree[i] as usize;
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Incremental slab counts over the points currently inside the box.
struct Engine<'a> {
    cloud: &'a Cloud,
    d: usize,
    eps: f64,
    rows: Vec<usize>,
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    rank: Vec<Vec<u32>>,
    fenwick: Vec<Fenwick>,
    inside: Vec<bool>,
    state: ShiftScaleState,
}

impl<'a> Engine<'a> {
    fn new(cloud: &'a Cloud, eps: f64, state: ShiftScaleState) -> Self {
        let d = cloud.dim();
        let rows = cloud.active_indices();
        let m = rows.len();
        let mut values = Vec::with_capacity(d);
        let mut order = Vec::with_capacity(d);
        let mut rank = Vec::with_capacity(d);
        for j in 0..d {
            let mut o: Vec<u32> = (0..m as u32).collect();
            o.sort_by(|&a, &b| {
                cloud.point(rows[a as usize])[j].total_cmp(&cloud.point(rows[b as usize])[j]).then(a.cmp(&b))
            });
            let mut r = vec![0u32; m];
            for (p, &id) in o.iter().enumerate() {
                r[id as usize] = p as u32;
            }
            values.push(o.iter().map(|&id| cloud.point(rows[id as usize])[j]).collect());
            order.push(o);
            rank.push(r);
        }
        let mut e = Self {
            cloud,
            d,
            eps,
            fenwick: (0..d).map(|_| Fenwick::new(m)).collect(),
            inside: vec![false; m],
            rows,
            values,
            order,
            rank,
            state,
        };
        for id in 0..m {
            let r = e.rows[id];
            if !e.state.is_deleted(r) && e.state.current_box.contains_exact(cloud.point(r)) {
                e.inside[id] = true;
                for j in 0..d {
                    e.fenwick[j].add(e.rank[j][id] as usize, 1);
                }
            }
        }
        e
    }

    fn evict(&mut self, id: usize) {
        if self.inside[id] {
            self.inside[id] = false;
            for j in 0..self.d {
                self.fenwick[j].add(self.rank[j][id] as usize, -1);
            }
        }
    }

    fn count_at_least(&self, j: usize, cut: f64) -> usize {
        let pos = self.values[j].partition_point(|&v| v < cut);
        self.fenwick[j].prefix(self.values[j].len()) - self.fenwick[j].prefix(pos)
    }

    fn count_at_most(&self, j: usize, cut: f64) -> usize {
        let pos = self.values[j].partition_point(|&v| v <= cut);
        self.fenwick[j].prefix(pos)
    }

    /// First failing one-dimensional check: (coordinate, upper side, k).
    fn first_one_d_failure(&self) -> Option<(usize, bool, usize)> {
        let bx = &self.state.current_box;
        for i in 0..self.d {
            for upper in [true, false] {
                for k in 1..=self.d {
                    let t = one_d_threshold(self.d, k, self.eps, self.state.n_ref);
                    let c = if upper {
                        self.count_at_least(i, upper_cut(bx, i, k, self.eps))
                    } else {
                        self.count_at_most(i, lower_cut(bx, i, k, self.eps))
                    };
                    if (c as f64) < t {
                        return Some((i, upper, k));
                    }
                }
            }
        }
        None
    }

    fn apply_update(&mut self, i: usize, upper: bool, k: usize) {
        let bx = &self.state.current_box;
        let step = k as f64 * slab_width(bx, i, self.eps);
        let vals = &self.values[i];
        let (from, to, range) = if upper {
            let from = bx.upper()[i];
            let to = from - step;
            (from, to, vals.partition_point(|&v| v <= to)..vals.partition_point(|&v| v <= from))
        } else {
            let from = bx.lower()[i];
            let to = from + step;
            (from, to, vals.partition_point(|&v| v < from)..vals.partition_point(|&v| v < to))
        };
        for p in range {
            let id = self.order[i][p] as usize;
            self.evict(id);
        }
        if upper {
            self.state.current_box.set_upper(i, to);
        } else {
            self.state.current_box.set_lower(i, to);
        }
        self.state.updates.push(BoundaryUpdate { coordinate: i, upper, k, from, to });
        self.state.iteration += 1;
    }

    /// Most violating pairwise intersection: ((i, j), (k1, k2), (si, sj)).
    #[allow(clippy::type_complexity)]
    fn worst_two_d_violation(&self) -> Option<((usize, usize), (usize, usize), (i8, i8))> {
        let d = self.d;
        if d < 2 {
            return None;
        }
        let bx = &self.state.current_box;
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
        // hist[pair][combo][k1-1][k2-1]
        let cells = d * d;
        let mut hist = vec![0u32; pairs.len() * 4 * cells];
        let mut up = vec![0usize; d];
        let mut lo = vec![0usize; d];
        for (id, &ins) in self.inside.iter().enumerate() {
            if !ins {
                continue;
            }
            let x = self.cloud.point(self.rows[id]);
            for j in 0..d {
                up[j] = depth(bx, j, x[j], true, self.eps);
                lo[j] = depth(bx, j, x[j], false, self.eps);
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let combos = [(up[i], up[j]), (up[i], lo[j]), (lo[i], up[j]), (lo[i], lo[j])];
                for (c, &(a, b)) in combos.iter().enumerate() {
                    if a > 0 && b > 0 {
                        hist[(p * 4 + c) * cells + (a - 1) * d + (b - 1)] += 1;
                    }
                }
            }
        }
        let signs = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)];
        let mut best: Option<(f64, ((usize, usize), (usize, usize), (i8, i8)))> = None;
        let mut cum = vec![0u64; cells];
        for (p, &pair) in pairs.iter().enumerate() {
            for (c, &sg) in signs.iter().enumerate() {
                let h = &hist[(p * 4 + c) * cells..(p * 4 + c + 1) * cells];
                for a in 0..d {
                    for b in 0..d {
                        let mut v = h[a * d + b] as u64;
                        if a > 0 {
                            v += cum[(a - 1) * d + b];
                        }
                        if b > 0 {
                            v += cum[a * d + b - 1];
                        }
                        if a > 0 && b > 0 {
                            v -= cum[(a - 1) * d + b - 1];
                        }
                        cum[a * d + b] = v;
                        let t = two_d_threshold(d, a + 1, b + 1, self.eps, self.state.n_ref);
                        if v as f64 > t {
                            let ratio = v as f64 / t;
                            if best.as_ref().is_none_or(|(r, _)| ratio > *r) {
                                best = Some((ratio, (pair, (a + 1, b + 1), sg)));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(_, v)| v)
    }

    fn delete_intersection(&mut self, (i, j): (usize, usize), (k1, k2): (usize, usize), (si, sj): (i8, i8)) {
        let bx = self.state.current_box.clone();
        let mut indices = Vec::new();
        for id in 0..self.inside.len() {
            if !self.inside[id] {
                continue;
            }
            let x = self.cloud.point(self.rows[id]);
            let a =
                if si > 0 { x[i] >= upper_cut(&bx, i, k1, self.eps) } else { x[i] <= lower_cut(&bx, i, k1, self.eps) };
            let b =
                if sj > 0 { x[j] >= upper_cut(&bx, j, k2, self.eps) } else { x[j] <= lower_cut(&bx, j, k2, self.eps) };
            if a && b {
                indices.push(self.rows[id]);
                self.evict(id);
                self.state.deleted[self.rows[id]] = true;
            }
        }
        self.state.deletions.push(Deletion { i, j, k1, k2, sign_i: si, sign_j: sj, indices });
        self.state.iteration += 1;
    }
}

/// Recovers an axis-aligned box from an ε-corrupted sample of its uniform law.
pub fn estimate_shift_scale(cloud: &Cloud, eps: f64, cfg: &ShiftScaleConfig) -> Result<ShiftScaleOutcome> {
    cfg.validate()?;
    if !(eps >= cfg.eps_min && eps <= cfg.eps_max) {
        return Err(invalid(format!("eps {eps} outside [{}, {}]", cfg.eps_min, cfg.eps_max)));
    }
    let d = cloud.dim();
    let n = cloud.active_count();
    let n_min = cfg.n_min(d, eps);
    if n < n_min {
        return Err(Error::TooFewPoints { needed: n_min, found: n });
    }
    let start = robust_range_find(cloud, eps, cfg.range_expansion)?;
    let mut engine = Engine::new(cloud, eps, ShiftScaleState::new(cloud, start));
    let cap = cfg.iteration_cap(d, eps);
    let budget = cfg.deletion_budget * eps * n as f64;
    let status = loop {
        if engine.state.iteration >= cap {
            break ShiftScaleStatus::IterationCap;
        }
        if let Some((i, upper, k)) = engine.first_one_d_failure() {
            engine.apply_update(i, upper, k);
            continue;
        }
        if engine.state.deleted_count() as f64 >= budget {
            break ShiftScaleStatus::DeletionBudgetReached;
        }
        match engine.worst_two_d_violation() {
            Some((pair, ks, signs)) => engine.delete_intersection(pair, ks, signs),
            None => break ShiftScaleStatus::Converged,
        }
    };
    let certified = match status {
        ShiftScaleStatus::Converged => true,
        ShiftScaleStatus::DeletionBudgetReached => engine.worst_two_d_violation().is_none(),
        ShiftScaleStatus::IterationCap => false,
    };
    let state = engine.state;
    Ok(ShiftScaleOutcome { estimate: state.current_box.clone(), state, status, certified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_body, sample_standard_cube, tv_exact_axis_aligned};

    fn uniform_line(lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
        let s = sample_standard_cube(1, n, seed).unwrap();
        s.cloud().coords().iter().map(|u| lo + (u + 1.0) / 2.0 * (hi - lo)).collect()
    }

    #[test]
    fn range_find_on_standard_interval() {
        let s = sample_standard_cube(1, 100_000, 1).unwrap();
        let b = robust_range_find(s.cloud(), 0.0, 4.0).unwrap();
        assert!(b.lower()[0] <= -1.0 && b.upper()[0] >= 1.0);
        assert!(b.lower()[0] >= -4.0 && b.upper()[0] <= 4.0);
    }

    #[test]
    fn range_find_matches_brute_force_with_outliers() {
        let mut v = uniform_line(3.0, 7.0, 2000, 2);
        v.iter_mut().take(100).for_each(|x| *x = 100.0);
        let c = Cloud::new(1, v.clone()).unwrap();
        let b = robust_range_find(&c, 0.05, 4.0).unwrap();
        v.sort_by(f64::total_cmp);
        let w = (0.55f64 * 2000.0).ceil() as usize;
        let (mut best_len, mut best) = (f64::INFINITY, (0.0, 0.0));
        for s in 0..2000 {
            for t in (s + w - 1)..2000 {
                let len = v[t] - v[s];
                if len < best_len {
                    best_len = len;
                    best = (v[s], v[t]);
                }
            }
        }
        let c0 = 0.5 * (best.0 + best.1);
        assert!((0.5 * (b.lower()[0] + b.upper()[0]) - c0).abs() < 1e-12);
        assert!((b.side(0) - 4.0 * best_len).abs() < 1e-9);
        assert!(b.lower()[0] <= 3.0 && b.upper()[0] >= 7.0);
        assert!(best.1 < 100.0);
    }

    #[test]
    fn range_find_degenerate() {
        let c = Cloud::new(1, vec![2.0; 50]).unwrap();
        assert!(matches!(robust_range_find(&c, 0.1, 4.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn true_box_passes_and_inflated_box_fails() {
        let s = sample_standard_cube(3, 200_000, 3).unwrap();
        let eps = 0.05;
        let st = ShiftScaleState::new(s.cloud(), AxisBox::standard(3));
        assert!(certificate_holds(s.cloud(), &st, eps).unwrap());
        let inflated = AxisBox::new(vec![-1.0; 3], vec![1.0 + 0.3 * 2.0, 1.0, 1.0]).unwrap();
        let st = ShiftScaleState::new(s.cloud(), inflated);
        let c = one_d_density_check(s.cloud(), &st, eps, 0, 3).unwrap();
        assert!(!c.upper_pass && c.lower_pass);
        assert_eq!(c.upper_count, 0);
    }

    #[test]
    fn engine_counts_match_scans() {
        let s = sample_standard_cube(3, 20_000, 4).unwrap();
        let eps = 0.05;
        let bx = AxisBox::new(vec![-1.2, -0.9, -1.0], vec![1.1, 1.3, 0.8]).unwrap();
        let st = ShiftScaleState::new(s.cloud(), bx.clone());
        let e = Engine::new(s.cloud(), eps, st.clone());
        for i in 0..3 {
            for k in 1..=3 {
                let c = one_d_density_check(s.cloud(), &st, eps, i, k).unwrap();
                assert_eq!(c.upper_count, e.count_at_least(i, upper_cut(&bx, i, k, eps)));
                assert_eq!(c.lower_count, e.count_at_most(i, lower_cut(&bx, i, k, eps)));
            }
        }
    }

    #[test]
    fn clean_recovery_in_two_dimensions() {
        let truth = AxisBox::new(vec![-2.0, 1.0], vec![3.0, 1.5]).unwrap();
        let s = sample_body(&truth.to_parallelopiped(), 200_000, 5).unwrap();
        let out = estimate_shift_scale(s.cloud(), 0.01, &ShiftScaleConfig::default()).unwrap();
        assert_eq!(out.status, ShiftScaleStatus::Converged);
        assert!(out.certified);
        let tv = tv_exact_axis_aligned(&out.estimate, &truth).unwrap();
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn updates_shrink_by_the_grid_step() {
        let s = sample_standard_cube(2, 50_000, 6).unwrap();
        let eps = 0.05;
        let out = estimate_shift_scale(s.cloud(), eps, &ShiftScaleConfig::default()).unwrap();
        let mut bx = out.state.initial_box.clone();
        for u in &out.state.updates {
            let side = bx.side(u.coordinate);
            assert!(((u.from - u.to).abs() - u.k as f64 * eps / 2.0 * side).abs() < 1e-12 * side);
            if u.upper {
                bx.set_upper(u.coordinate, u.to);
            } else {
                bx.set_lower(u.coordinate, u.to);
            }
            assert!(bx.side(u.coordinate) < side);
        }
        assert_eq!(bx, out.estimate);
    }

    #[test]
    fn rejects_small_samples_and_eps_out_of_range() {
        let s = sample_standard_cube(2, 1000, 7).unwrap();
        let cfg = ShiftScaleConfig::default();
        assert!(matches!(estimate_shift_scale(s.cloud(), 0.05, &cfg), Err(Error::TooFewPoints { .. })));
        assert!(estimate_shift_scale(s.cloud(), 0.0, &cfg).is_err());
    }

    #[test]
    fn zero_eps_checks_pass_vacuously() {
        let s = sample_standard_cube(2, 100, 8).unwrap();
        let st = ShiftScaleState::new(s.cloud(), AxisBox::new(vec![-5.0; 2], vec![5.0; 2]).unwrap());
        assert!(certificate_holds(s.cloud(), &st, 0.0).unwrap());
    }

    #[test]
    fn depth_agrees_with_cut_definitions() {
        let bx = AxisBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let eps = 0.1;
        for t in 0..=1000 {
            let v = -1.0 + 2.0 * t as f64 / 1000.0;
            let k = depth(&bx, 0, v, true, eps);
            for kk in 1..=2 {
                assert_eq!(v >= upper_cut(&bx, 0, kk, eps), k != 0 && k <= kk);
            }
            let k = depth(&bx, 0, v, false, eps);
            for kk in 1..=2 {
                assert_eq!(v <= lower_cut(&bx, 0, kk, eps), k != 0 && k <= kk);
            }
        }
    }
}
