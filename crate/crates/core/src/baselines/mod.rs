//! Comparison policies: random search, a linear dueling bandit and double
//! Thompson sampling over an ensemble of networks.

mod double_ts;
mod linear;
mod random;

pub use double_ts::{double_ts_pair, double_ts_report, DoubleTs, EnsembleState, ENSEMBLE_SIZE};
pub use linear::{linear_fit, linear_select, LinearDueling, LinearDuelingState, LinearFit};
pub use random::RandomSearch;
