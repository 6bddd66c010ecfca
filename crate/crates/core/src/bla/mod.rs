//! Robust-method Best Linear Approximation: period averaging within each
//! phase realization, then averaging over realizations, with the total
//! distortion split into noise and stochastic nonlinear parts.

mod estimate;
mod record;

pub use estimate::{band_mean, estimate_bla, mse_of_bla, BlaEstimate, ILL_CONDITIONED_REL};
pub use record::{ExperimentRecord, RecordMeta};
