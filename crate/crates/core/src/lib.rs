//! Numerical laboratory for white-noise invariance of the KPZ / stochastic Burgers flow.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod lattice;
pub mod noise;
pub mod polymer;
pub mod quadrature;
pub mod rng;
pub mod snapshot;
pub mod spde;
pub mod stats;
pub mod verification;

pub use error::{LabError, Result};
