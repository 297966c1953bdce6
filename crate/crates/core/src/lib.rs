//! Simulation and verification of distorted skew Brownian motion in R^d with
//! concentric spherical permeable membranes.
//!
//! The crate is organised bottom-up:
//!
//! * [`weights`]: membrane geometry, the step weight, the density and A2 diagnostics.
//! * [`radial`]: skew coefficients, the radial diffusion, scale function and exit probabilities.
//! * [`simulate`]: Euler schemes with skew crossing resolution and local-time estimation.
//! * [`verify`]: statistical tests with confidence intervals.
//! * [`analysis`]: deterministic quadrature checks (integration by parts, trace inequality, volume growth).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these guards

pub mod analysis;
pub mod error;
pub mod quadrature;
pub mod radial;
pub mod simulate;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
