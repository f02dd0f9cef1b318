//! Neural dueling bandit for optimizing over embedded candidates from
//! pairwise preferences, with baselines, a simulated rater and an
//! experiment harness.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod history;
mod kernel;
pub mod math;
pub mod net;
pub mod oracle;
pub mod policy;
pub mod uncertainty;

pub use error::{Error, Result};
