//! Monte Carlo escape probabilities and the range-capacity estimator.

use super::{CapacityEstimate, CapacityMethod};
use crate::group::{GroupElement, GroupPresentation};
use crate::rng::{derive, element_stream, WalkRng};
use crate::walk::WalkPath;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

const ESCAPE_TAG: u64 = 0x6573_6370;
const JAIN_OREY_TAG: u64 = 0x6a6f_7267;

/// How escape-trial random streams are keyed.
///
/// ByIndex keys a stream by the element's position in the sorted set, which
/// is the cheap default. ByPoint keys it by the element itself, so the same
/// element replays the same trial paths in every set it appears in; subset
/// monotonicity of escape counts then holds samplewise, which the sandwich
/// checks rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamPolicy {
    ByIndex,
    ByPoint,
}

/// Configuration for escape-probability trials.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EscapeConfig {
    pub horizon: usize,
    pub trials: u32,
    pub seed: u64,
    pub policy: StreamPolicy,
}

impl EscapeConfig {
    pub fn new(horizon: usize, trials: u32, seed: u64) -> Self {
        EscapeConfig { horizon, trials, seed, policy: StreamPolicy::ByIndex }
    }

    pub fn with_policy(mut self, policy: StreamPolicy) -> Self {
        self.policy = policy;
        self
    }
}

/// A finite-horizon non-return probability estimate.
///
/// The value at the full horizon over-estimates the infinite-horizon escape
/// probability; the value at half the horizon is reported so the caller can
/// gauge how much is still moving. Both come from the same trial paths, so
/// value <= value_half_horizon holds samplewise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub value: f64,
    pub value_half_horizon: f64,
    pub std_error: f64,
    pub horizon: usize,
    pub trials: u32,
}

/// Runs one escape trial: steps from `start` until the walk enters `set` or
/// the horizon runs out. Returns the hit time, if any.
fn first_return(
    group: &GroupPresentation,
    set: &FxHashSet<GroupElement>,
    start: &GroupElement,
    horizon: usize,
    rng: &mut WalkRng,
) -> Option<usize> {
    let gens = group.generators();
    let m = gens.len();
    let mut pos = start.clone();
    for k in 1..=horizon {
        let step = rng.index(m);
        group.multiply_in_place(&mut pos, &gens[step]);
        if set.contains(&pos) {
            return Some(k);
        }
    }
    None
}

/// Integer non-return counts for one start point: (full horizon, half
/// horizon) successes out of `trials`.
fn count_non_returns(
    group: &GroupPresentation,
    set: &FxHashSet<GroupElement>,
    start: &GroupElement,
    index: usize,
    cfg: &EscapeConfig,
) -> (u32, u32) {
    let half = cfg.horizon / 2;
    let salt = derive(cfg.seed, ESCAPE_TAG);
    let mut full = 0u32;
    let mut half_count = 0u32;
    for trial in 0..cfg.trials {
        let stream = match cfg.policy {
            StreamPolicy::ByIndex => (index as u64) * (cfg.trials as u64) + trial as u64,
            StreamPolicy::ByPoint => element_stream(salt, start, trial),
        };
        let hit = first_return(group, set, start, cfg.horizon, &mut WalkRng::new(salt, stream));
        if hit.is_none() {
            full += 1;
        }
        if hit.is_none_or(|k| k > half) {
            half_count += 1;
        }
    }
    (full, half_count)
}

/// Estimates P_g(tau^+_A > horizon) by direct simulation.
pub fn escape_mc(
    group: &GroupPresentation,
    a: &[GroupElement],
    g: &GroupElement,
    cfg: &EscapeConfig,
) -> EscapeEstimate {
    let set: FxHashSet<GroupElement> = a.iter().cloned().collect();
    let (full, half) = count_non_returns(group, &set, g, 0, cfg);
    let t = cfg.trials as f64;
    let p = full as f64 / t;
    EscapeEstimate {
        value: p,
        value_half_horizon: half as f64 / t,
        std_error: (p * (1.0 - p) / t).sqrt(),
        horizon: cfg.horizon,
        trials: cfg.trials,
    }
}

/// Escape-sum capacity estimate: sum of non-return frequencies over the
/// elements of A, with trials independent across points.
///
/// Counts are integers accumulated per point and summed in the sorted
/// element order, so the result is independent of the parallel schedule.
pub fn capacity_mc(
    group: &GroupPresentation,
    a: &[GroupElement],
    cfg: &EscapeConfig,
) -> CapacityEstimate {
    if a.is_empty() {
        return CapacityEstimate {
            set_size: 0,
            method: CapacityMethod::EscapeMc,
            point: 0.0,
            std_error: Some(0.0),
            bracket: None,
            horizon: Some(cfg.horizon),
            radius: None,
            trials: Some(cfg.trials),
            seed: Some(cfg.seed),
            converged: None,
        };
    }
    debug_assert!(a.windows(2).all(|w| w[0] < w[1]), "elements sorted and distinct");
    let set: FxHashSet<GroupElement> = a.iter().cloned().collect();
    let counts: Vec<u32> = a
        .par_iter()
        .enumerate()
        .map(|(i, g)| count_non_returns(group, &set, g, i, cfg).0)
        .collect();
    finish_capacity(counts, cfg, CapacityMethod::EscapeMc)
}

fn finish_capacity(counts: Vec<u32>, cfg: &EscapeConfig, method: CapacityMethod) -> CapacityEstimate {
    let t = cfg.trials as f64;
    let mut point = 0.0;
    let mut var = 0.0;
    for &c in &counts {
        let p = c as f64 / t;
        point += p;
        var += p * (1.0 - p) / t;
    }
    CapacityEstimate {
        set_size: counts.len(),
        method,
        point,
        std_error: Some(var.sqrt()),
        bracket: None,
        horizon: Some(cfg.horizon),
        radius: None,
        trials: Some(cfg.trials),
        seed: Some(cfg.seed),
        converged: None,
    }
}

/// Capacity of a path's range via its first-visit points, walking the path
/// in time order and skipping revisits; streams are keyed by the point
/// itself under an estimator-specific salt, so the estimate is independent
/// of visit order and of capacity_mc's streams.
pub fn jain_orey_capacity(
    group: &GroupPresentation,
    path: &WalkPath,
    cfg: &EscapeConfig,
) -> CapacityEstimate {
    let mut seen: FxHashSet<GroupElement> = FxHashSet::default();
    let mut first_visits: Vec<GroupElement> = Vec::new();
    for pos in &path.positions {
        if seen.insert(pos.clone()) {
            first_visits.push(pos.clone());
        }
    }
    let salted = EscapeConfig {
        seed: derive(cfg.seed, JAIN_OREY_TAG),
        policy: StreamPolicy::ByPoint,
        ..*cfg
    };
    let counts: Vec<u32> = first_visits
        .par_iter()
        .map(|g| count_non_returns(group, &seen, g, 0, &salted).0)
        .collect();
    let mut est = finish_capacity(counts, &salted, CapacityMethod::JainOreyRange);
    est.seed = Some(cfg.seed);
    est
}
