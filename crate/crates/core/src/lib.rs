//! Bayesian estimation of stochastic volatility models with an AR(1) log
//! volatility.
//!
//! Two estimators share one sweep skeleton:
//!
//! * [`gauss`]: the parametric sampler with Gaussian return and volatility
//!   errors, conjugate parameter draws and an inverse-gamma envelope sampler
//!   for each latent volatility.
//! * [`semipar`]: NSVM-3, which replaces the Gaussian error factors with a
//!   bivariate kernel density of standardized residuals from a Gaussian
//!   pilot run, so dependent and heavy-tailed innovations are accommodated.
//!
//! [`simgen`] generates the dependent Gaussian and Student-t test data,
//! [`metrics`] scores estimates against the truth and [`replicate`] runs
//! paired fits across many simulated datasets.

// NaN-rejecting checks such as `!(x > 0.0)` are deliberate throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dists;
pub mod envelope;
pub mod error;
mod fastexp;
pub mod gauss;
pub mod kde;
pub mod metrics;
pub mod model;
pub mod par;
pub mod replicate;
pub mod semipar;
pub mod simgen;

pub use error::{Result, SvError};
pub use model::{ChainOutput, McmcConfig, ModelParams, PriorSpec, ReturnSeries, VolPath};
