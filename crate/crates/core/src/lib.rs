//! Auxiliary particle filters, particle-marginal adaptive Metropolis-Hastings
//! and marginal-likelihood estimation for scalar state-space models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod evidence;
pub mod filters;
pub mod models;
pub mod parallel;
pub mod resample;
pub mod rng;
pub mod samplers;
pub mod weights;

pub use error::{Error, Result};
