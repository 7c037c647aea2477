//! Numerical laboratory for spiked sample covariance matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`laws`] evaluates the deterministic Marchenko-Pastur quantities.
//! * [`ensemble`] builds populations, noise draws and the derived matrices.
//! * [`spectral`] decomposes them and evaluates resolvent identities.
//! * [`checks`] turns limit statements into Monte Carlo statistics.
//! * [`inference`] estimates spikes from observed spectra.
//! * [`harness`] wires configuration, execution and serialization together.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod harness;
pub mod inference;
pub mod laws;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
