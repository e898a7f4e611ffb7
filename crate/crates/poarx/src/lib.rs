//! Multivariate Poisson autoregressive models with exogenous covariates.
//!
//! The conditional mean of each count series follows a linear recursion on
//! lagged observations, lagged intensities, and covariates; cross-series
//! dependence is captured by Frank's copula. The crate provides:
//!
//! - [`dists`]: scalar Poisson primitives (log-pmf, CDF, quantile, sampling),
//! - [`copula`]: Frank's Archimedean copula and discrete rectangle pmfs,
//! - [`model`]: model specification and the intensity filtering recursion,
//! - [`estimation`]: two-stage fitting (per-margin ML, then the dependence
//!   parameter) with numerical standard errors,
//! - [`forecasting`]: multi-step intensity forecasts, exact one- and two-step
//!   predictive distributions, and simulated prediction intervals,
//! - [`simulation`]: trajectory generation for testing and intervals,
//! - [`evaluation`]: log scores, information criteria, cross-validation,
//!   and holdout scoring.

pub mod copula;
pub mod dists;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod forecasting;
pub mod model;
pub mod simulation;

pub use error::{Error, Result};
