//! Cube and parallelopiped primitives: sampling, membership, slab statistics,
//! truncated moments and total-variation distance.

mod matching;
mod sample;
mod slab;
mod tv;
mod types;

pub use matching::{column_error, match_rows, RowMatching, EXACT_MATCHING_MAX_DIM};
pub use sample::{apply_affine, sample_body, sample_standard_cube, Cloud, SampleSet, TruthLabel};
pub(crate) use slab::check_unit;
pub use slab::{slab_outside, truncated_direction_stats, truncated_mean_along, SlabSet};
pub use tv::{tv_exact_axis_aligned, tv_monte_carlo, TvEstimate};
pub use types::{AffineMap, AxisBox, Parallelopiped, DEFAULT_MAX_CONDITION, MEMBERSHIP_RTOL};
