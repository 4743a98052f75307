//! Constants of every estimator, gathered in one serializable bundle.

use serde::{Deserialize, Serialize};

use crate::affine::AffineConfig;
use crate::error::{invalid, Result};
use crate::robust::{FilterConfig, WarmStartConfig};
use crate::rotation::RotationConfig;
use crate::shift_scale::ShiftScaleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// ε handed to the estimators. Defaults to the corruption ε, raised to
    /// `shift_scale.eps_min` where a positive value is required.
    pub eps: Option<f64>,
    pub filter: FilterConfig,
    pub warm_start: WarmStartConfig,
    pub shift_scale: ShiftScaleConfig,
    pub rotation: RotationConfig,
    pub affine: AffineConfig,
    /// Monte-Carlo sample count for TV estimates.
    pub mc_budget: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eps: None,
            filter: FilterConfig::default(),
            warm_start: WarmStartConfig::default(),
            shift_scale: ShiftScaleConfig::default(),
            rotation: RotationConfig::default(),
            affine: AffineConfig::default(),
            mc_budget: 1_000_000,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.eps {
            if !(0.0..0.5).contains(&e) {
                return Err(invalid(format!("estimator eps must lie in [0, 0.5), got {e}")));
            }
        }
        if self.mc_budget == 0 {
            return Err(invalid("mc_budget must be positive"));
        }
        self.filter.validate()?;
        self.warm_start.validate()?;
        self.shift_scale.validate()?;
        self.rotation.validate()?;
        self.affine.validate()
    }
}
