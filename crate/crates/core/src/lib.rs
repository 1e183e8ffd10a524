//! Sampling with k-dimensional darts.
//!
//! A dart is a set of `C(d,k)` axis-aligned `k`-dimensional flats, each placed
//! independently. Evaluating an integrand along flats instead of at points
//! gives lower-variance Monte Carlo estimates when the region of interest is
//! small or thin. The crate provides:
//!
//! - [`flat`]: flat and dart representation and placement (MC, LHS, oriented planar lines),
//! - [`estimator`]: flat averages, dart values, standard errors and error-curve drivers,
//! - [`shapes`]: balls and squished, rotated ellipsoids with exact flat sections,
//! - [`mps`]: relaxed maximal Poisson-disk sampling with line darts,
//! - [`pof`]: probability-of-failure estimation on analytic response surfaces,
//! - [`cli`]: the `kdarts` experiment harness.

pub mod cli;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod flat;
pub mod mps;
pub mod numeric;
pub mod pof;
pub mod rng;
pub mod shapes;
pub mod stats;

pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use estimator::{Estimate, FlatIntegrable};
pub use flat::{Dart, Flat};
pub use rng::RngStream;
