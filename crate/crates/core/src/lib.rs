//! Wildfire front modelling with the level-set equation.
//!
//! Two solvers share one set of scenarios: a first-order upwind level-set
//! method and physics-informed neural networks (maximum-likelihood and
//! variational Bayesian) trained on the same PDE.

pub mod bayes;
pub mod contour;
pub mod error;
pub mod experiment;
pub mod field;
pub mod io;
pub mod levelset;
pub mod metrics;
pub mod net;
pub mod pinn;
pub mod train;

pub use error::{Error, Result};
