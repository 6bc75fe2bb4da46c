//! Batch experiments confronting the limit laws with desk-scale data.
//!
//! Every experiment is a pure function of its configuration and seed list:
//! replications fan out across (seed, stream) pairs and fold back in fixed
//! seed order, so reports are byte-identical across re-runs and across
//! worker-pool sizes. Reports carry the raw per-sample rows next to the
//! aggregated statistics so external tooling can re-derive everything.

mod clt;
mod decay;
mod dyadic;
mod pairsum;
mod slln;

pub use clt::clt_experiment;
pub use decay::{exit_tail_check, kernel_decay_check};
pub use dyadic::dyadic_sandwich_experiment;
pub use pairsum::pair_green_sum_check;
pub use slln::{exponent_fit, slln_experiment};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Backend, GroupElement, GroupPresentation, GroupSpec};
use crate::potential::{
    capacity_mc, equilibrium_measure, EscapeConfig, GreenCache, StreamPolicy,
};
use crate::rng::derive;
use crate::stats::{quantile, StreamingMoments};

pub const REPORT_SCHEMA: u32 = 1;

/// Salt for deriving escape-stream seeds from a walk seed, so the walk and
/// its capacity estimate never share randomness.
pub(crate) const CAP_EST_TAG: u64 = 0x6361_7065;

/// Convergence threshold handed to the equilibrium-measure solver; the
/// best-energy iterate is used whether or not the gap reaches it.
pub(crate) const FW_TOLERANCE: f64 = 1e-12;

/// Which capacity estimator an experiment applies to sampled ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    /// Escape-count Monte Carlo with point-keyed streams.
    EscapeMc,
    /// Equilibrium-measure energy with a truncated Green cache.
    Variational,
}

/// Capacity estimator configuration shared by the range experiments.
///
/// Horizons scale with the path length: the escape horizon (or the Green
/// horizon for the variational route) is `horizon_factor * n`. Keeping the
/// horizon proportional to n turns truncation bias into a nearly constant
/// factor across a grid, which cancels in fitted exponents and trend ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    pub horizon_factor: usize,
    pub trials: u32,
    pub fw_iterations: usize,
    pub green_eps: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: EstimatorMethod::EscapeMc,
            horizon_factor: 16,
            trials: 64,
            fw_iterations: 2000,
            green_eps: 1e-6,
        }
    }
}

/// One-pass summary of the samples collected at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStat {
    pub x: usize,
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// One raw sample, keyed by grid value and seed; `statistic` names what the
/// value measures. These rows are the CSV export surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub x: usize,
    pub seed: u64,
    pub statistic: String,
    pub value: f64,
}

/// Least-squares fit with its window, so every reported exponent names the
/// grid points it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub std_error: f64,
    pub intercept: f64,
    /// Axis descriptions, e.g. "ln n" vs "ln mean(cap)".
    pub x_axis: String,
    pub y_axis: String,
    pub window: Vec<usize>,
}

/// Normality diagnostics of a standardized sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub sample_count: u64,
    pub ks_distance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Common result envelope for all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub experiment: String,
    pub group: GroupSpec,
    /// What the grid values mean: "n", "r", or "levels".
    pub grid_label: String,
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub estimator: Option<EstimatorConfig>,
    pub per_point: Vec<GridStat>,
    pub fit: Option<FitReport>,
    pub normality: Option<NormalityReport>,
    /// Named scalar diagnostics specific to the experiment.
    pub extra: BTreeMap<String, f64>,
    pub samples: Vec<SampleRow>,
}

pub(crate) fn grid_stat(x: usize, values: &[f64]) -> GridStat {
    assert!(!values.is_empty());
    let mut moments = StreamingMoments::new();
    for &v in values {
        moments.push(v);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    GridStat {
        x,
        count: moments.count(),
        mean: moments.mean(),
        variance: moments.variance(),
        std_error: moments.stderr(),
        min: moments.min(),
        max: moments.max(),
        q25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
    }
}

pub(crate) fn ensure_increasing(grid: &[usize], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} must not be empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

pub(crate) fn ensure_seed_count(seeds: &[u64], min: usize) -> Result<()> {
    if seeds.len() < min {
        return Err(Error::InvalidParameter(format!(
            "need at least {min} seeds, got {}",
            seeds.len()
        )));
    }
    Ok(())
}

/// Upper half of the grid, the declared window for exponent fits.
pub(crate) fn top_half_window(grid: &[usize]) -> &[usize] {
    &grid[grid.len() / 2..]
}

/// Polynomial growth index of the word metric under the standard generators;
/// None for the exponential-growth free products.
pub(crate) fn growth_index(group: &GroupPresentation) -> Option<u32> {
    match *group.backend() {
        Backend::Lattice { dim } => Some(dim as u32),
        Backend::Heisenberg => Some(4),
        Backend::FreeProductZ2 { arity } => match arity {
            1 => Some(0),
            2 => Some(1),
            _ => None,
        },
    }
}

/// Applies the configured estimator to one sampled range. `elements` must be
/// sorted; `cache` is required by the variational route and must cover
/// `horizon_factor * n`.
pub(crate) fn estimate_range_capacity(
    group: &GroupPresentation,
    elements: &[GroupElement],
    n: usize,
    cfg: &EstimatorConfig,
    cache: Option<&GreenCache>,
    walk_seed: u64,
) -> Result<f64> {
    match cfg.method {
        EstimatorMethod::EscapeMc => {
            let ec = EscapeConfig::new(
                cfg.horizon_factor * n,
                cfg.trials,
                derive(walk_seed, CAP_EST_TAG),
            )
            .with_policy(StreamPolicy::ByPoint);
            Ok(capacity_mc(group, elements, &ec).point)
        }
        EstimatorMethod::Variational => {
            let cache = cache.ok_or_else(|| {
                Error::InvalidParameter("variational capacity estimates need a Green cache".into())
            })?;
            let (_, est) =
                equilibrium_measure(group, cache, elements, cfg.fw_iterations, FW_TOLERANCE)?;
            Ok(est.point)
        }
    }
}
