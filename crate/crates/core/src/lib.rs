//! Random walks on finitely generated groups and the capacity of their ranges.
//!
//! The crate simulates symmetric random walks on a few concrete group
//! backends, computes exact small-scale kernels and potentials, estimates
//! Green functions and capacities by Monte Carlo, and packages the limit-law
//! experiments (law of large numbers for the range capacity, central limit
//! behaviour in high dimension, kernel decay, exit tails) behind one API.

pub mod error;
pub mod experiments;
pub mod group;
pub(crate) mod lattice_dp;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
