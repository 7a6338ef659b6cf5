//! Pseudo-label self-training dynamics for test-time adaptation of a binary
//! linear classifier under a two-class Gaussian model.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: the Gaussian data model, sampling and evaluation metrics.
//! * [`losses`]: the six hard/conjugate self-training losses as scalar
//!   functions of the margin.
//! * [`quadrature`]: Gauss-Hermite rules for Gaussian expectations.
//! * [`dynamics`]: stochastic gradient descent and the population recursion.
//! * [`analysis`]: numerical certificates for tail bounds and log-rate growth.
//! * [`cli`]: experiment configs, figure presets, CSV and SVG output.

pub mod analysis;
pub mod cli;
pub mod dynamics;
mod error;
pub mod losses;
pub mod model;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
