//! Spatio-temporal graph CNN pedestrian trajectory forecaster.
//!
//! Observed trajectories are turned into a per-step weighted graph
//! ([`graph`]), embedded by graph + temporal convolutions and extrapolated
//! to the prediction horizon by a time-as-channels CNN ([`model`]), which
//! outputs a bivariate Gaussian per pedestrian and future step
//! ([`gaussian`]). Training minimizes the Gaussian negative log-likelihood
//! ([`train`]); evaluation follows the best-of-N ADE/FDE protocol
//! ([`eval`]).

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod graph;
pub mod harness;
pub mod model;
pub mod plot;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod trajdata;

pub use error::{Error, Result};
