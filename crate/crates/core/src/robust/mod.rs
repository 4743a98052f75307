//! Robust mean and covariance by spectral filtering, and the rotation warm
//! start.

mod covariance;
mod filter;
mod warm_start;

pub use covariance::{robust_covariance, RobustCovarianceReport};
pub use filter::{robust_mean, robust_mean_of_rows, FilterConfig, RobustMeanReport, MAX_FILTER_EPS};
pub use warm_start::{
    alignment, directional_fourth_moment, oracle_normals, warm_start, WarmStartConfig, WarmStartMode, WarmStartReport,
};
