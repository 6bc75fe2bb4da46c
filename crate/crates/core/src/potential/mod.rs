//! Green functions, escape probabilities, and capacity estimators.
//!
//! Capacity is computed by three independent routes so they can be checked
//! against each other: Monte Carlo escape counting, deterministic harmonic
//! brackets on a truncated ball, and the variational equilibrium-measure
//! form. Green values come from exact kernel iteration, folded onto signed
//! permutation orbits where the group is a standard lattice.

mod bracket;
mod energy;
mod escape;
mod sandwich;

pub use bracket::capacity_bracket;
pub use energy::{energy, equilibrium_measure, SimplexMeasure};
pub use escape::{
    capacity_mc, escape_mc, jain_orey_capacity, EscapeConfig, EscapeEstimate, StreamPolicy,
};
pub use sandwich::{capacity_sandwich_check, sandwich_on_sets, SandwichReport};

use crate::error::{Error, Result};
use crate::group::{Backend, GroupElement, GroupPresentation, DEFAULT_MEMORY_CAP};
use crate::lattice_dp::LatticeTable;
use crate::walk::exact_kernel;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

/// How a Green value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMethod {
    TruncatedKernel,
    MonteCarlo,
}

/// A single Green-function estimate.
///
/// Truncated-kernel values are exact partial sums and therefore lower bounds
/// of the full Green value; the secondary value at twice the horizon is the
/// empirical tail gauge. Monte Carlo values carry a standard error instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub target: String,
    pub method: GreenMethod,
    pub value: f64,
    pub horizon: usize,
    pub secondary_value: Option<f64>,
    pub secondary_horizon: Option<usize>,
    pub std_error: Option<f64>,
    pub trials: Option<u64>,
    /// True for every truncated-kernel value: the tail is not bounded
    /// rigorously, the value is exact for the stated horizon only.
    pub lower_bound_only: bool,
}

/// Truncation parameters for kernel-backed Green computations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GreenParams {
    /// Bound on the probability mass lost to support truncation.
    pub eps: f64,
    /// Hard cap on stored states.
    pub memory_cap: usize,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams { eps: 1e-9, memory_cap: DEFAULT_MEMORY_CAP }
    }
}

/// Cached truncated Green values for one group at one horizon.
///
/// Standard lattices fold the kernel onto signed-permutation orbits; every
/// other backend stores the full support map. Lookups outside the retained
/// support return 0, which keeps every cached value a lower bound.
pub struct GreenCache {
    inner: CacheImpl,
}

enum CacheImpl {
    Lattice(LatticeTable),
    Generic {
        horizon: usize,
        values: FxHashMap<GroupElement, f64>,
        origin_series: Vec<f64>,
        mass_deficit: f64,
    },
}

impl GreenCache {
    /// Builds the cache with Green sums up to `horizon`.
    pub fn build(
        group: &GroupPresentation,
        horizon: usize,
        params: &GreenParams,
    ) -> Result<GreenCache> {
        Self::build_checkpointed(group, horizon, None, params)
    }

    /// Builds the cache, optionally freezing a secondary snapshot of the
    /// Green sums at an intermediate time (lattice fast path only; the
    /// generic path accumulates the snapshot directly).
    pub fn build_checkpointed(
        group: &GroupPresentation,
        horizon: usize,
        checkpoint: Option<usize>,
        params: &GreenParams,
    ) -> Result<GreenCache> {
        if let Backend::Lattice { dim } = *group.backend() {
            if group.has_standard_lattice_generators() && dim <= 6 {
                let table = LatticeTable::build_checkpointed(
                    dim,
                    horizon,
                    checkpoint,
                    params.eps,
                    params.memory_cap,
                )?;
                return Ok(GreenCache { inner: CacheImpl::Lattice(table) });
            }
        }
        let kernel = exact_kernel(group, horizon, prune_threshold(params.eps, horizon), params.memory_cap)?;
        // distribution(k) already carries the full mirrored support.
        let mut values: FxHashMap<GroupElement, f64> = FxHashMap::default();
        for k in 0..=horizon {
            for (g, p) in kernel.distribution(k) {
                *values.entry(g.clone()).or_insert(0.0) += p;
            }
        }
        let origin_series = kernel.origin_series(group);
        let mass_deficit = kernel.pruned_mass(horizon);
        Ok(GreenCache { inner: CacheImpl::Generic { horizon, values, origin_series, mass_deficit } })
    }

    pub fn horizon(&self) -> usize {
        match &self.inner {
            CacheImpl::Lattice(t) => t.horizon,
            CacheImpl::Generic { horizon, .. } => *horizon,
        }
    }

    /// True when the cache uses the signed-permutation orbit fold.
    pub fn is_orbit_folded(&self) -> bool {
        matches!(self.inner, CacheImpl::Lattice(_))
    }

    /// Truncation radius of the retained support, when one applies.
    pub fn truncation_radius(&self) -> Option<u32> {
        match &self.inner {
            CacheImpl::Lattice(t) => Some(t.radius),
            CacheImpl::Generic { .. } => None,
        }
    }

    pub fn mass_deficit(&self) -> f64 {
        match &self.inner {
            CacheImpl::Lattice(t) => t.mass_deficit,
            CacheImpl::Generic { mass_deficit, .. } => *mass_deficit,
        }
    }

    /// p_k(e) for k = 0..=horizon.
    pub fn origin_series(&self) -> &[f64] {
        match &self.inner {
            CacheImpl::Lattice(t) => &t.origin_series,
            CacheImpl::Generic { origin_series, .. } => origin_series,
        }
    }

    /// Truncated Green value at g; 0 outside the retained support.
    pub fn value(&self, g: &GroupElement) -> f64 {
        match &self.inner {
            CacheImpl::Lattice(t) => match g {
                GroupElement::Lattice(coords) => t.green_at(coords),
                _ => panic!("lattice green cache queried with a non-lattice element"),
            },
            CacheImpl::Generic { values, .. } => values.get(g).copied().unwrap_or(0.0),
        }
    }

    pub fn value_at_origin(&self) -> f64 {
        match &self.inner {
            CacheImpl::Lattice(t) => t.green_at_origin(),
            CacheImpl::Generic { origin_series, .. } => origin_series.iter().sum(),
        }
    }

    /// Green value of the group difference a^{-1} b.
    pub fn value_between(
        &self,
        group: &GroupPresentation,
        a: &GroupElement,
        b: &GroupElement,
    ) -> f64 {
        let diff = group.multiply(&group.inverse(a), b);
        self.value(&diff)
    }

    /// Horizon of the frozen checkpoint snapshot, when one was requested.
    pub fn checkpoint_time(&self) -> Option<usize> {
        match &self.inner {
            CacheImpl::Lattice(t) => t.checkpoint_time(),
            CacheImpl::Generic { .. } => None,
        }
    }

    /// Green value at the frozen checkpoint time, when one was requested.
    pub fn checkpoint_value(&self, g: &GroupElement) -> Option<f64> {
        match &self.inner {
            CacheImpl::Lattice(t) => match g {
                GroupElement::Lattice(coords) => t.checkpoint_green_at(coords),
                _ => panic!("lattice green cache queried with a non-lattice element"),
            },
            CacheImpl::Generic { .. } => None,
        }
    }
}

/// Per-entry prune threshold matching a total-mass budget: the exact kernel
/// prunes by entry value, so spreading eps across horizon*support keeps the
/// cumulative pruned mass well under eps for the sizes used here.
fn prune_threshold(eps: f64, horizon: usize) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    eps / ((horizon.max(1) as f64) * 1e4)
}

/// Exact partial Green sum at `g` up to `n_max`, with the sum up to
/// `2 * n_max` as the reported tail gauge.
pub fn green_truncated(
    group: &GroupPresentation,
    g: &GroupElement,
    n_max: usize,
    params: &GreenParams,
) -> Result<GreenEstimate> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("green horizon must be at least 1".into()));
    }
    let cache = GreenCache::build_checkpointed(group, 2 * n_max, Some(n_max), params)?;
    let (value, secondary) = match &cache.inner {
        CacheImpl::Lattice(_) => {
            let v = cache
                .checkpoint_value(g)
                .expect("checkpoint requested at build");
            (v, cache.value(g))
        }
        CacheImpl::Generic { .. } => {
            // The generic path sums the kernel twice; distributions are
            // cheap to re-walk relative to building them.
            let kernel = exact_kernel(
                group,
                2 * n_max,
                prune_threshold(params.eps, 2 * n_max),
                params.memory_cap,
            )?;
            let canon = canonical_query(group, g);
            let mut lo = 0.0;
            let mut hi = 0.0;
            for k in 0..=2 * n_max {
                let p = kernel.probability(k, &canon);
                if k <= n_max {
                    lo += p;
                }
                hi += p;
            }
            (lo, hi)
        }
    };
    Ok(GreenEstimate {
        target: g.encode(),
        method: GreenMethod::TruncatedKernel,
        value,
        horizon: n_max,
        secondary_value: Some(secondary),
        secondary_horizon: Some(2 * n_max),
        std_error: None,
        trials: None,
        lower_bound_only: true,
    })
}

/// Kernel tables store one representative per {g, g^{-1}} pair.
fn canonical_query(group: &GroupPresentation, g: &GroupElement) -> GroupElement {
    let inv = group.inverse(g);
    if inv < *g {
        inv
    } else {
        g.clone()
    }
}

/// Monte Carlo visit count: mean number of visits to `g` in the first
/// `horizon` steps (time 0 included), a lower-biased estimate of the Green
/// value with a standard error across trials.
pub fn green_mc(
    group: &GroupPresentation,
    g: &GroupElement,
    horizon: usize,
    trials: u64,
    seed: u64,
) -> GreenEstimate {
    assert!(trials >= 1, "at least one trial");
    let gens = group.generators();
    let mut moments = crate::stats::StreamingMoments::new();
    for trial in 0..trials {
        let mut rng = crate::rng::WalkRng::new(crate::rng::derive(seed, GREEN_MC_TAG), trial);
        let mut pos = group.identity();
        let mut visits = u64::from(pos == *g);
        for _ in 1..=horizon {
            let step = rng.index(gens.len());
            group.multiply_in_place(&mut pos, &gens[step]);
            if pos == *g {
                visits += 1;
            }
        }
        moments.push(visits as f64);
    }
    GreenEstimate {
        target: g.encode(),
        method: GreenMethod::MonteCarlo,
        value: moments.mean(),
        horizon,
        secondary_value: None,
        secondary_horizon: None,
        std_error: Some(moments.stderr()),
        trials: Some(trials),
        lower_bound_only: true,
    }
}

const GREEN_MC_TAG: u64 = 0x6772_6d63;

/// Summed Green values over all pairs (a, b): G(A, B) = sum G(a^{-1} b).
///
/// Differences are collected as a canonical multiset first and summed in
/// sorted key order with integer multiplicities, so G(A, B) = G(B, A)
/// exactly: the multisets coincide because G(g) = G(g^{-1}).
pub fn cross_green(
    group: &GroupPresentation,
    cache: &GreenCache,
    a: &[GroupElement],
    b: &[GroupElement],
) -> f64 {
    let mut diffs: std::collections::BTreeMap<GroupElement, u64> = std::collections::BTreeMap::new();
    for x in a {
        let xi = group.inverse(x);
        for y in b {
            let d = group.multiply(&xi, y);
            let canon = canonical_query(group, &d);
            *diffs.entry(canon).or_insert(0) += 1;
        }
    }
    let mut total = 0.0;
    for (d, count) in &diffs {
        total += cache.value(d) * (*count as f64);
    }
    total
}

/// Capacity estimation method tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    EscapeMc,
    HarmonicBracket,
    VariationalLower,
    JainOreyRange,
}

/// One capacity estimate with its method metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub set_size: usize,
    pub method: CapacityMethod,
    pub point: f64,
    pub std_error: Option<f64>,
    /// Deterministic [lower, upper] pair for the harmonic bracket.
    pub bracket: Option<[f64; 2]>,
    pub horizon: Option<usize>,
    pub radius: Option<u32>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    /// Set by iterative solvers; None for single-pass methods.
    pub converged: Option<bool>,
}
