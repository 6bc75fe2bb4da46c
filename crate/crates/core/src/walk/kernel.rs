//! Exact n-step transition kernels by dynamic programming.
//!
//! The method iterates p_{k+1}(g) = (1/|Gamma|) sum_gamma p_k(g gamma^-1).
//! States are stored once per inversion pair {g, g^-1}: the walk started at
//! the identity satisfies p_k(g) = p_k(g^-1), so the table computes each
//! value a single time and mirrors it. That keeps the symmetry exact in
//! floating point instead of merely approximate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::group::{Backend, GroupElement, GroupPresentation};

/// Distributions of S_0..S_horizon with a pruning ledger.
#[derive(Debug, Clone)]
pub struct KernelTable {
    horizon: usize,
    distributions: Vec<BTreeMap<GroupElement, f64>>,
    /// Cumulative probability mass dropped by pruning up to each time.
    pruned_mass: Vec<f64>,
}

impl KernelTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn distribution(&self, k: usize) -> &BTreeMap<GroupElement, f64> {
        &self.distributions[k]
    }

    pub fn probability(&self, k: usize, g: &GroupElement) -> f64 {
        self.distributions[k].get(g).copied().unwrap_or(0.0)
    }

    pub fn pruned_mass(&self, k: usize) -> f64 {
        self.pruned_mass[k]
    }

    /// Return probabilities p_k(e) for k = 0..=horizon.
    pub fn origin_series(&self, group: &GroupPresentation) -> Vec<f64> {
        let e = group.identity();
        (0..=self.horizon).map(|k| self.probability(k, &e)).collect()
    }
}

fn canonical_rep(group: &GroupPresentation, g: GroupElement) -> GroupElement {
    let inv = group.inverse(&g);
    if inv < g {
        inv
    } else {
        g
    }
}

/// Exact kernel up to n_max steps.
///
/// Entries whose probability falls below `prune_eps` are dropped and their
/// mass recorded in the ledger; prune_eps = 0 keeps the full support. The
/// enumeration fails with `BallTooLarge` once the support would exceed `cap`
/// elements, reporting the last completed time.
pub fn exact_kernel(
    group: &GroupPresentation,
    n_max: usize,
    prune_eps: f64,
    cap: usize,
) -> Result<KernelTable> {
    if prune_eps < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "prune_eps must be non-negative, got {prune_eps}"
        )));
    }
    let m = group.generator_count();
    let inv_gen: Vec<GroupElement> =
        group.generators().iter().map(|g| group.inverse(g)).collect();
    let weight = 1.0 / m as f64;

    // Per-pair state: canonical representative -> probability of each element
    // of the pair.
    let mut state: BTreeMap<GroupElement, f64> = BTreeMap::new();
    state.insert(group.identity(), 1.0);
    let mut pruned_total = 0.0;

    let mut distributions = Vec::with_capacity(n_max + 1);
    let mut pruned_mass = Vec::with_capacity(n_max + 1);
    distributions.push(mirror(group, &state));
    pruned_mass.push(0.0);

    for k in 0..n_max {
        // Candidate supports at time k+1: all neighbours of the current
        // support, folded to canonical representatives.
        let mut candidates: BTreeMap<GroupElement, f64> = BTreeMap::new();
        for h in state.keys() {
            let hinv = group.inverse(h);
            for gamma in group.generators() {
                candidates.insert(canonical_rep(group, group.multiply(h, gamma)), 0.0);
                if hinv != *h {
                    candidates.insert(canonical_rep(group, group.multiply(&hinv, gamma)), 0.0);
                }
            }
        }
        let mut support = 0usize;
        for t in candidates.keys() {
            support += if group.inverse(t) == *t { 1 } else { 2 };
        }
        if support > cap {
            return Err(Error::BallTooLarge { cap, radius_reached: k as u32 });
        }

        for (t, slot) in candidates.iter_mut() {
            let mut acc = 0.0;
            for ig in &inv_gen {
                let from = canonical_rep(group, group.multiply(t, ig));
                if let Some(&p) = state.get(&from) {
                    acc += p;
                }
            }
            *slot = acc * weight;
        }
        candidates.retain(|t, p| {
            if *p <= 0.0 {
                false
            } else if *p < prune_eps {
                let card = if group.inverse(t) == *t { 1.0 } else { 2.0 };
                pruned_total += card * *p;
                false
            } else {
                true
            }
        });
        state = candidates;
        distributions.push(mirror(group, &state));
        pruned_mass.push(pruned_total);
    }

    Ok(KernelTable { horizon: n_max, distributions, pruned_mass })
}

fn mirror(
    group: &GroupPresentation,
    state: &BTreeMap<GroupElement, f64>,
) -> BTreeMap<GroupElement, f64> {
    let mut out = BTreeMap::new();
    for (g, &p) in state {
        out.insert(group.inverse(g), p);
        out.insert(g.clone(), p);
    }
    out
}

/// Return probabilities p_k(e), k = 0..=n_max, via the cheapest exact method
/// for the group.
///
/// Standard lattice generators use an orbit-folded table with a truncation
/// radius chosen so the neglected mass is below 1e-12; standard free-product
/// generators reduce to a birth-death chain on the word length; everything
/// else runs the generic kernel untruncated.
pub fn return_probability_series(
    group: &GroupPresentation,
    n_max: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    if group.has_standard_lattice_generators() {
        if let Backend::Lattice { dim } = *group.backend() {
            if dim <= 6 {
                return crate::lattice_dp::origin_series(dim, n_max, 1e-12, cap);
            }
        }
    }
    if group.has_standard_free_product_generators() {
        if let Backend::FreeProductZ2 { arity } = *group.backend() {
            return Ok(free_product_origin_series(arity, n_max));
        }
    }
    let table = exact_kernel(group, n_max, 0.0, cap)?;
    Ok(table.origin_series(group))
}

/// Word length of the standard walk on Z2 * ... * Z2 is a birth-death chain:
/// from 0 it moves to 1; from r >= 1 it moves up with probability
/// (N-1)/N and down with probability 1/N.
fn free_product_origin_series(arity: usize, n_max: usize) -> Vec<f64> {
    let n = arity as f64;
    let up = (n - 1.0) / n;
    let down = 1.0 / n;
    let mut cur = vec![0.0f64; n_max + 2];
    let mut next = vec![0.0f64; n_max + 2];
    cur[0] = 1.0;
    let mut series = Vec::with_capacity(n_max + 1);
    series.push(1.0);
    for _ in 0..n_max {
        for slot in next.iter_mut() {
            *slot = 0.0;
        }
        for r in 0..=n_max {
            let p = cur[r];
            if p == 0.0 {
                continue;
            }
            if r == 0 {
                next[1] += p;
            } else {
                next[r + 1] += p * up;
                next[r - 1] += p * down;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        series.push(cur[0]);
    }
    series
}
