//! Cost-optimal one-sided control charts when the process mean drifts through a
//! compound Poisson process whose jumps follow an exponential–geometric mixture.
//!
//! - [`distributions`]: the shift laws and the CDF of the accumulated shift.
//! - [`moments`]: closed forms for the expected squared distance and its
//!   integral over a sampling interval, with brute-force counterparts.
//! - [`oracle`]: Monte Carlo simulation of paths and of chart operation.
//! - [`chart`]: the discretized Markov chain and its stationary cost.
//! - [`optimize`]: grid search over the sampling interval and critical value.

pub mod chart;
pub mod distributions;
pub mod error;
pub mod moments;
pub mod optimize;
pub mod oracle;

pub use chart::{build_model, expected_cost, ChartModel, ChartParams, ChartState, CostSpec, LevelGrid, ProcessSpec};
pub use distributions::{GenericComponentMoments, MixtureShiftSpec, ShiftCountLaw};
pub use error::{Error, Result};
pub use moments::{c2, c2_general, c2_mixture, IntervalCostInput, IntervalCostResult, ShiftModel};
pub use optimize::{grid_search, Axis, Optimum, SearchSpace, SurfacePoint};
pub use oracle::{estimate_c2, simulate_chart, McEstimate};
