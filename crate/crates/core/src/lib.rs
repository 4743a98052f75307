//! Robust estimation of an affinely transformed hypercube from samples in
//! which an ε fraction of points has been adversarially replaced.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod config;
pub mod corruption;
pub mod error;
pub mod facts;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod robust;
pub mod rotation;
pub mod seed;
pub mod set_lemma;
pub mod shift_scale;

pub use error::{Error, Result};
pub use nalgebra;
