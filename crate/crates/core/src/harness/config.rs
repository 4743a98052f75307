use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::corruption::{Adversary, CorruptionSpec};
use crate::error::{check_dim, invalid, Result};
use crate::geometry::{AffineMap, AxisBox, Parallelopiped};
use crate::linalg::rows_to_matrix;
use crate::seed::{derive_seed, rng_from_seed, Rng};

fn default_max_center() -> f64 {
    2.0
}
fn default_side_range() -> [f64; 2] {
    [0.5, 4.0]
}
fn default_condition() -> f64 {
    5.0
}

/// How the true body is chosen. Omitted parameters are drawn from the
/// `truth` seed stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    /// Axis-aligned box; random centers in `[-max_center, max_center]` and
    /// log-uniform sides in `side_range`.
    ShiftScale {
        #[serde(default)]
        lower: Option<Vec<f64>>,
        #[serde(default)]
        upper: Option<Vec<f64>>,
        #[serde(default = "default_max_center")]
        max_center: f64,
        #[serde(default = "default_side_range")]
        side_range: [f64; 2],
    },
    /// Rotated standard cube; random (Haar) rotation unless rows are given.
    Rotation {
        #[serde(default)]
        normals: Option<Vec<Vec<f64>>>,
    },
    /// Image of the standard cube under `x = A y + b`; random `A` has
    /// condition number exactly `condition`, random `b` lies in
    /// `[-max_shift, max_shift]^d`.
    Affine {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        shift: Option<Vec<f64>>,
        #[serde(default = "default_condition")]
        condition: f64,
        #[serde(default = "default_max_center")]
        max_shift: f64,
    },
    /// Explicit parallelopiped.
    Body { normals: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64> },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::Affine { matrix: None, shift: None, condition: default_condition(), max_shift: default_max_center() }
    }
}

fn random_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix so the law is Haar.
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

impl TruthSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            TruthSpec::ShiftScale { lower, upper, max_center, side_range } => {
                if let Some(l) = lower {
                    check_dim(d, l.len())?;
                }
                if let Some(u) = upper {
                    check_dim(d, u.len())?;
                }
                if lower.is_some() != upper.is_some() {
                    return Err(invalid("give both lower and upper or neither"));
                }
                if !(*max_center >= 0.0 && side_range[0] > 0.0 && side_range[0] <= side_range[1]) {
                    return Err(invalid("need max_center >= 0 and 0 < side_range[0] <= side_range[1]"));
                }
            }
            TruthSpec::Rotation { normals } => {
                if let Some(rows) = normals {
                    check_dim(d, rows.len())?;
                }
            }
            TruthSpec::Affine { matrix, shift, condition, max_shift } => {
                if let Some(m) = matrix {
                    check_dim(d, m.len())?;
                }
                if let Some(s) = shift {
                    check_dim(d, s.len())?;
                }
                if !(*condition >= 1.0 && condition.is_finite() && *max_shift >= 0.0) {
                    return Err(invalid("need condition >= 1 and max_shift >= 0"));
                }
            }
            TruthSpec::Body { normals, lower, upper } => {
                check_dim(d, normals.len())?;
                check_dim(d, lower.len())?;
                check_dim(d, upper.len())?;
            }
        }
        Ok(())
    }

    /// Builds the body, drawing free parameters from `seed`.
    pub fn build(&self, d: usize, seed: u64) -> Result<Parallelopiped> {
        self.validate(d)?;
        let mut rng = rng_from_seed(seed);
        match self {
            TruthSpec::ShiftScale { lower: Some(l), upper: Some(u), .. } => {
                Ok(AxisBox::new(l.clone(), u.clone())?.to_parallelopiped())
            }
            TruthSpec::ShiftScale { max_center, side_range, .. } => {
                let (lo, hi) = (side_range[0].ln(), side_range[1].ln());
                let mut l = Vec::with_capacity(d);
                let mut u = Vec::with_capacity(d);
                for _ in 0..d {
                    let c = max_center * (2.0 * rng.random::<f64>() - 1.0);
                    let side = (lo + (hi - lo) * rng.random::<f64>()).exp();
                    l.push(c - side / 2.0);
                    u.push(c + side / 2.0);
                }
                Ok(AxisBox::new(l, u)?.to_parallelopiped())
            }
            TruthSpec::Rotation { normals } => {
                let rows = match normals {
                    Some(r) => r.clone(),
                    None => {
                        let q = random_orthogonal(d, &mut rng);
                        (0..d).map(|i| q.row(i).iter().copied().collect()).collect()
                    }
                };
                Parallelopiped::new(rows, vec![-1.0; d], vec![1.0; d])
            }
            TruthSpec::Affine { matrix, shift, condition, max_shift } => {
                let a = match matrix {
                    Some(m) => rows_to_matrix(m),
                    None => {
                        let u = random_orthogonal(d, &mut rng);
                        let v = random_orthogonal(d, &mut rng);
                        let lc = condition.ln();
                        let mut sig: Vec<f64> = (0..d).map(|_| (lc * rng.random::<f64>()).exp()).collect();
                        sig[0] = 1.0;
                        if d > 1 {
                            sig[d - 1] = *condition;
                        }
                        u * DMatrix::from_diagonal(&DVector::from_vec(sig)) * v.transpose()
                    }
                };
                let b = match shift {
                    Some(s) => s.clone(),
                    None => (0..d).map(|_| max_shift * (2.0 * rng.random::<f64>() - 1.0)).collect(),
                };
                AffineMap::new(a, b)?.to_parallelopiped()
            }
            TruthSpec::Body { normals, lower, upper } => {
                Parallelopiped::new(normals.clone(), lower.clone(), upper.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    ShiftScale,
    Rotation,
    #[default]
    Affine,
}

impl EstimateMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateMode::ShiftScale => "shift_scale",
            EstimateMode::Rotation => "rotation",
            EstimateMode::Affine => "affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub epsilon: f64,
    pub adversary: Adversary,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self { epsilon: 0.02, adversary: Adversary::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<String>,
    pub points: Option<String>,
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub truth: TruthSpec,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    #[serde(default)]
    pub mode: EstimateMode,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

/// Seeds of every random stream in a run, split from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub truth: u64,
    pub sample: u64,
    pub corruption: u64,
    pub warm_start: u64,
    pub tv: u64,
}

impl SeedSet {
    pub fn derive(master: u64) -> Self {
        Self {
            truth: derive_seed(master, "truth"),
            sample: derive_seed(master, "sample"),
            corruption: derive_seed(master, "corruption"),
            warm_start: derive_seed(master, "warm_start"),
            tv: derive_seed(master, "tv"),
        }
    }
}

impl ExperimentConfig {
    pub fn new(d: usize, n: usize) -> Self {
        Self {
            d,
            n,
            truth: TruthSpec::default(),
            corruption: CorruptionConfig::default(),
            mode: EstimateMode::default(),
            estimator: EstimatorConfig::default(),
            master_seed: 0,
            output: OutputPaths::default(),
        }
    }

    pub fn seeds(&self) -> SeedSet {
        SeedSet::derive(self.master_seed)
    }

    pub fn corruption_spec(&self) -> CorruptionSpec {
        CorruptionSpec {
            epsilon: self.corruption.epsilon,
            adversary: self.corruption.adversary.clone(),
            seed: self.seeds().corruption,
        }
    }

    /// ε handed to the estimator: the configured value, else the corruption
    /// level, raised to `eps_min` for the modes that need a positive value.
    pub fn estimator_eps(&self) -> f64 {
        let e = self.estimator.eps.unwrap_or(self.corruption.epsilon);
        match self.mode {
            EstimateMode::Rotation => e,
            _ => e.max(self.estimator.shift_scale.eps_min),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("d and n must be positive"));
        }
        self.truth.validate(self.d)?;
        self.corruption_spec().validate(self.d)?;
        self.estimator.validate()?;
        let e = self.estimator_eps();
        let ss = &self.estimator.shift_scale;
        match self.mode {
            EstimateMode::Rotation => {
                if !(0.0..0.5).contains(&e) {
                    return Err(invalid(format!("estimator eps {e} outside [0, 0.5)")));
                }
            }
            _ => {
                if e > ss.eps_max {
                    return Err(invalid(format!("estimator eps {e} above eps_max {}", ss.eps_max)));
                }
                let need = ss.n_min(self.d, e);
                // Corruption replaces points, so n points stay active.
                if self.n < need {
                    return Err(invalid(format!("n = {} below n_min = {need} for d = {}, eps = {e}", self.n, self.d)));
                }
            }
        }
        Ok(())
    }
}
