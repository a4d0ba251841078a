//! Multivariate quantile Bayesian structural time series.
//!
//! Each series is a local-linear trend with a mean-reverting slope plus a
//! sparse linear regression, observed under multivariate asymmetric Laplace
//! noise whose location is tied to a per-series quantile level. Posterior
//! sampling is a Gibbs scheme with spike-and-slab selection.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod forecaster;
pub mod io;
pub mod model;
pub mod sampler;
pub mod simdata;
pub mod trainer;
pub mod trend;

pub use distributions::{Rng, SymmetricPd};
pub use error::{Error, Result};
pub use model::{Dataset, QuantileSpec};
