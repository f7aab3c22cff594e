//! Local likelihood estimation for nonstationary Gaussian random fields.
//!
//! This crate fits locally stationary Gaussian process models by maximizing
//! a *weighted local likelihood*: the ordinary log likelihood is written as
//! a telescoping sum of conditional increments along a nearest-first
//! ordering of the observations around a target location, and each increment
//! is downweighted by its distance from the target. Moving the target across
//! a grid turns a single stationary family into an estimator of a spatially
//! varying parameter field.
//!
//! What lives where:
//!
//! - [`data`]: datasets, neighbor orderings, weight vectors, CSV I/O.
//! - [`kernels`]: higher-order Gaussian kernels, variance-minimizing
//!   constrained weights, boundary bandwidth correction.
//! - [`covariance`]: the Matérn family, a fractional-order modified Bessel
//!   function, and three closed-form nonstationary covariance constructions.
//! - [`linalg`]: incremental (bordered) Cholesky factorizations, inverse
//!   downdates, quadratic-form sequences, Gaussian KL divergence.
//! - [`simulate`]: reproducible field simulation from a counter-based
//!   generator with an inverse-CDF normal transform.
//! - [`wll`]: the weighted local likelihood objective, pointwise and
//!   surface fits, the closed-form local variance estimator.
//! - [`bayesrisk`]: exact finite-sample Bayes risk of the local variance
//!   estimator under polynomial priors, and kernel-comparison grids.
//! - [`bandwidth`]: data-driven bandwidth selectors with simulation
//!   calibration, plus an oracle selector for benchmarking.
//! - [`config`] / [`commands`]: the experiment configuration format and the
//!   implementations behind the `locfield` command-line tool.
//!
//! The `examples/` directory of this crate is the best place to start; each
//! example is a small, runnable end-to-end experiment.

// `!(x > 0.0)` is used throughout as a NaN-rejecting guard (a plain
// `x <= 0.0` lets NaN through), and tabulated rational-approximation
// coefficients are kept verbatim from their sources.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod bandwidth;
pub mod bayesrisk;
pub mod commands;
pub mod config;
pub mod covariance;
pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod numeric;
pub mod simulate;
pub mod svg;
pub mod wll;

pub use data::{Dataset, Location, NeighborOrdering, WeightVector};
pub use error::{Error, Result};
