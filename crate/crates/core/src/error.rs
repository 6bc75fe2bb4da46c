//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator set is empty")]
    EmptyGeneratorSet,

    #[error("generator set contains a duplicate: {0}")]
    DuplicateGenerator(String),

    #[error("generator set is not closed under inversion: {0} has no inverse in the set")]
    NonSymmetricGenerators(String),

    #[error("ball enumeration exceeded the memory cap of {cap} elements; last completed radius {radius_reached}")]
    BallTooLarge { cap: usize, radius_reached: u32 },

    #[error("window [{m}, {n}] is out of bounds for a path of length {len}")]
    WindowOutOfBounds { m: usize, n: usize, len: usize },

    #[error("2^{levels} dyadic segments exceed the path length {len}")]
    TooManyLevels { levels: u32, len: usize },

    #[error("generator set too small for the no-backtrack walk (need at least 2 generators, have {0})")]
    DegenerateGenerators(usize),

    #[error("backtrack count list has {have} entries, reconstruction needs {need}")]
    InsufficientCounts { have: usize, need: usize },

    #[error("relaxation did not reach residual {residual:e} within {sweeps} sweeps")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("invalid group specification: {0}")]
    InvalidGroupSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
