//! Trajectory simulation, range tracking, exit times, and the two path
//! decompositions used by the capacity experiments.

pub mod backtrack;
pub mod dyadic;
pub mod kernel;

pub use backtrack::{
    insert_backtracks, simulate_no_backtrack, simulate_via_backtracks, BacktrackDecomposition,
};
pub use dyadic::{dyadic_boundaries, dyadic_segments, DyadicSplit};
pub use kernel::{exact_kernel, return_probability_series, KernelTable};

use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupPresentation, WordMetric};
use crate::rng::WalkRng;

/// A simulated trajectory S_0..S_n together with the generator indices that
/// produced it and the RNG coordinates that make it replayable.
#[derive(Debug, Clone)]
pub struct WalkPath {
    pub group: Arc<GroupPresentation>,
    /// steps[k] is the index of X_{k+1} in the generator list.
    pub steps: Vec<u32>,
    /// positions[k] = S_k; positions[k+1] = positions[k] * generators[steps[k]].
    pub positions: Vec<GroupElement>,
    pub seed: u64,
    pub stream_id: u64,
}

impl WalkPath {
    /// Number of steps n; positions has n + 1 entries.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the position recursion; used by tests on constructed paths.
    pub fn is_valid(&self) -> bool {
        if self.positions.len() != self.steps.len() + 1 {
            return false;
        }
        for (k, &s) in self.steps.iter().enumerate() {
            if s as usize >= self.group.generator_count() {
                return false;
            }
            let expect = self
                .group
                .multiply(&self.positions[k], &self.group.generators()[s as usize]);
            if expect != self.positions[k + 1] {
                return false;
            }
        }
        true
    }
}

/// Simulates n i.i.d. uniform generator steps from the identity.
pub fn simulate(group: &Arc<GroupPresentation>, n: usize, seed: u64, stream_id: u64) -> WalkPath {
    simulate_from(group, group.identity(), n, seed, stream_id)
}

/// Simulates n steps starting from `start`.
pub fn simulate_from(
    group: &Arc<GroupPresentation>,
    start: GroupElement,
    n: usize,
    seed: u64,
    stream_id: u64,
) -> WalkPath {
    let mut rng = WalkRng::new(seed, stream_id);
    let gens = group.generator_count();
    let mut steps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(start);
    for _ in 0..n {
        let s = rng.index(gens) as u32;
        let mut next = positions.last().unwrap().clone();
        group.apply_generator(&mut next, s as usize);
        steps.push(s);
        positions.push(next);
    }
    WalkPath { group: Arc::clone(group), steps, positions, seed, stream_id }
}

/// Visited set of a window R[m, n] with first-visit indices.
#[derive(Debug, Clone)]
pub struct RangeSet {
    first_visit: FxHashMap<GroupElement, usize>,
    /// Members in canonical element order; fixes iteration for reductions.
    elements: Vec<GroupElement>,
    window: Option<(usize, usize)>,
}

impl RangeSet {
    /// Builds a set from explicit elements; duplicates collapse to their
    /// first occurrence. Used for hand-picked sets rather than walk windows.
    pub fn from_elements<I: IntoIterator<Item = GroupElement>>(iter: I) -> Self {
        let mut first_visit = FxHashMap::default();
        for (i, g) in iter.into_iter().enumerate() {
            first_visit.entry(g).or_insert(i);
        }
        let mut elements: Vec<GroupElement> = first_visit.keys().cloned().collect();
        elements.sort_unstable();
        RangeSet { first_visit, elements, window: None }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.first_visit.contains_key(g)
    }

    pub fn first_visit(&self, g: &GroupElement) -> Option<usize> {
        self.first_visit.get(g).copied()
    }

    /// Members sorted in canonical element order.
    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    /// Left-translates every member by `t`.
    pub fn translated(&self, group: &GroupPresentation, t: &GroupElement) -> RangeSet {
        let mut first_visit = FxHashMap::default();
        let mut elements = Vec::with_capacity(self.elements.len());
        for g in &self.elements {
            let h = group.multiply(t, g);
            elements.push(h.clone());
            first_visit.insert(h, self.first_visit[g]);
        }
        elements.sort_unstable();
        RangeSet { first_visit, elements, window: self.window }
    }

    pub fn intersection(&self, other: &RangeSet) -> RangeSet {
        let (small, big) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        RangeSet::from_elements(
            small.elements.iter().filter(|g| big.contains(g)).cloned(),
        )
    }

    pub fn union(&self, other: &RangeSet) -> RangeSet {
        RangeSet::from_elements(self.elements.iter().chain(other.elements.iter()).cloned())
    }
}

/// Exact visited set of positions[m..=n].
pub fn range_of(path: &WalkPath, m: usize, n: usize) -> Result<RangeSet> {
    if m > n || n >= path.positions.len() {
        return Err(Error::WindowOutOfBounds { m, n, len: path.positions.len() });
    }
    let mut first_visit = FxHashMap::default();
    for i in m..=n {
        first_visit.entry(path.positions[i].clone()).or_insert(i);
    }
    let mut elements: Vec<GroupElement> = first_visit.keys().cloned().collect();
    elements.sort_unstable();
    Ok(RangeSet { first_visit, elements, window: Some((m, n)) })
}

/// First index with rho(S_k) >= r, or None if the path never leaves the open
/// ball of radius r. r = 0 exits immediately at index 0.
pub fn exit_time(path: &WalkPath, r: u32, cap: usize) -> Result<Option<usize>> {
    let metric = WordMetric::for_group(&path.group, r.saturating_sub(1), cap)?;
    Ok(exit_time_with_metric(path, r, &metric))
}

/// `exit_time` against a prebuilt metric. A table metric must cover radius
/// r - 1: elements it cannot resolve are treated as already outside.
pub fn exit_time_with_metric(path: &WalkPath, r: u32, metric: &WordMetric) -> Option<usize> {
    path.positions.iter().position(|g| match metric.distance(g) {
        Some(d) => d >= r,
        None => true,
    })
}
