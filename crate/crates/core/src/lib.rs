//! Stochastic projectile trajectory simulation and impact-point prediction.
//!
//! The crate couples a 12-state modified-linear projectile model with
//! additive position noise (an SDE integrated by Monte Carlo), a mean-field
//! moment-closure engine that propagates the first and second statistical
//! moments directly, and a canard feedback guidance loop for dispersion
//! reduction studies.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod moments;
pub mod plot;
pub mod rng;
pub mod scenario;
pub mod sde;

pub use error::{Error, Result};
