use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::types::{AxisBox, Parallelopiped};
use crate::error::{check_dim, invalid, Result};
use crate::seed::{rng_from_seed, splitmix64};

const MC_CHUNK: usize = 1 << 15;

/// Monte-Carlo TV estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// `1 - vol(h1 ∩ h2) / max(vol(h1), vol(h2))`, in log space.
pub fn tv_exact_axis_aligned(h1: &AxisBox, h2: &AxisBox) -> Result<f64> {
    check_dim(h1.dim(), h2.dim())?;
    let mut log_inter = 0.0;
    for i in 0..h1.dim() {
        let overlap = h1.upper()[i].min(h2.upper()[i]) - h1.lower()[i].max(h2.lower()[i]);
        if overlap <= 0.0 {
            return Ok(1.0);
        }
        log_inter += overlap.ln();
    }
    let log_max = h1.log_volume().max(h2.log_volume());
    Ok((-(log_inter - log_max).exp_m1()).clamp(0.0, 1.0))
}

/// Estimates `max(vol(p \ q)/vol(p), vol(q \ p)/vol(q))` from `m` uniform
/// points per body. Both bodies reuse the same standard-cube draws, which
/// makes the estimate exactly symmetric in its arguments.
pub fn tv_monte_carlo(p: &Parallelopiped, q: &Parallelopiped, m: usize, seed: u64) -> Result<TvEstimate> {
    check_dim(p.dim(), q.dim())?;
    if m == 0 {
        return Err(invalid("Monte-Carlo budget must be positive"));
    }
    let d = p.dim();
    let mp = p.to_affine_map()?;
    let mq = q.to_affine_map()?;
    let chunks = m.div_ceil(MC_CHUNK);
    let (esc_p, esc_q) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(splitmix64(seed ^ splitmix64(c as u64)));
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut u = vec![0.0; d];
            let mut x = vec![0.0; d];
            let (mut ep, mut eq) = (0u64, 0u64);
            for _ in 0..len {
                for v in u.iter_mut() {
                    *v = 2.0 * rng.random::<f64>() - 1.0;
                }
                mp.apply_into(&u, &mut x);
                if !q.contains(&x) {
                    ep += 1;
                }
                mq.apply_into(&u, &mut x);
                if !p.contains(&x) {
                    eq += 1;
                }
            }
            (ep, eq)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let f = esc_p.max(esc_q) as f64 / m as f64;
    Ok(TvEstimate { estimate: f, stderr: (f * (1.0 - f) / m as f64).sqrt() })
}
