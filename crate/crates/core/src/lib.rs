//! Randomized Kashin-type splittings of bounded orthonormal systems.
//!
//! Bottom-up: [`systems`] builds Walsh and Fourier systems and generic tables,
//! [`metrics`] provides the norms and process distances on their spans,
//! [`entropy`] estimates covering numbers and Gaussian widths, [`empirical`]
//! measures Bernoulli and empirical-process suprema, [`selection`] performs
//! the random splitting with its certificates, and [`coset`] runs the
//! combinatorial affine-subcube search on the Boolean cube. [`experiment`]
//! ties them together for the command-line driver.

// Guards are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coset;
pub mod empirical;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod fwht;
pub mod metrics;
pub mod optimize;
pub mod par;
pub mod rng;
pub mod selection;
pub mod systems;

pub use error::{Error, Result};
