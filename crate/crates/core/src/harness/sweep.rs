use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, Diagnostics};
use crate::error::{invalid, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
    /// Dimensions to run; empty means the base config's `d`.
    pub dims: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { eps: vec![0.01, 0.02, 0.05], dims: Vec::new(), repeats: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub eps: f64,
    pub repeat: usize,
    pub master_seed: u64,
    pub tv: f64,
    pub tv_stderr: f64,
    pub tv_exact: Option<f64>,
    pub column_error: f64,
    pub rounds: Option<usize>,
    /// `ok` or the error message.
    pub status: String,
}

/// Runs every (d, ε, repeat) cell. Repeat `r` uses the same master seed at
/// every ε and d, so cells differ only in the swept parameter.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.eps.is_empty() || spec.repeats == 0 {
        return Err(invalid("sweep needs at least one eps and one repeat"));
    }
    let dims = if spec.dims.is_empty() { vec![base.d] } else { spec.dims.clone() };
    let mut cells = Vec::new();
    for &d in &dims {
        for &eps in &spec.eps {
            for r in 0..spec.repeats {
                let mut cfg = base.clone();
                cfg.d = d;
                cfg.corruption.epsilon = eps;
                cfg.master_seed = derive_seed(base.master_seed, &format!("repeat{r}"));
                cfg.validate()?;
                cells.push((r, cfg));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(r, cfg)| {
            let mut row = SweepRow {
                d: cfg.d,
                eps: cfg.corruption.epsilon,
                repeat: r,
                master_seed: cfg.master_seed,
                tv: f64::NAN,
                tv_stderr: f64::NAN,
                tv_exact: None,
                column_error: f64::NAN,
                rounds: None,
                status: "ok".into(),
            };
            match run_experiment(&cfg) {
                Ok(rep) => {
                    row.tv = rep.evaluation.tv.estimate;
                    row.tv_stderr = rep.evaluation.tv.stderr;
                    row.tv_exact = rep.evaluation.tv_exact;
                    row.column_error = rep.evaluation.column_error;
                    if let Diagnostics::Affine { rounds, .. } = &rep.estimate.diagnostics {
                        row.rounds = Some(rounds.len());
                    }
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect())
}

/// Whether the mean TV per ε (over all dims and repeats) is nondecreasing in ε.
pub fn mean_tv_nondecreasing(rows: &[SweepRow]) -> bool {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let means: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let v: Vec<f64> = rows.iter().filter(|r| r.eps == e && r.tv.is_finite()).map(|r| r.tv).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect();
    means.windows(2).all(|w| w[0] <= w[1])
}
