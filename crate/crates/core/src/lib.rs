//! Simulated-census estimation of FGT poverty measures for small areas under
//! a two-fold nested error linear regression model
//! `y_djk = x'beta + u_d + v_dj + e_djk` on the log welfare scale.
//!
//! The crate provides the ELL estimator extended to two levels, the modified
//! variants MELL1 (keeps the estimated area effect) and MELL2 (additionally
//! keeps estimated subarea effects where sampled), the one-fold ELL1
//! comparison estimator, and a Monte Carlo study harness that reproduces the
//! study design around them: skew-normal error scenarios, two-stage samples,
//! per-replicate bias/MSE accumulation, and CSV reporting.
//!
//! Everything is driven by hierarchical deterministic RNG streams, so results
//! are reproducible bit-for-bit for a given seed, independent of worker count.

pub mod dist;
pub mod error;
pub mod fit;
pub mod population;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod simulator;
pub mod study;

pub use error::{Error, Result};
pub use rng::RngStream;
