//! Orbit-folded kernel tables for lattices with standard generators.
//!
//! The step distribution is invariant under coordinate permutations and sign
//! flips, so p_k is constant on orbits of that group. A state is stored once
//! per orbit, keyed by the absolute coordinates sorted in decreasing order
//! and packed into a u64 (10 bits per coordinate, dimensions up to 6). This
//! shrinks supports by roughly 2^d d! and makes horizon-thousands kernels
//! cheap in a few hundred megabytes at most.
//!
//! Supports are truncated at an l1 radius R chosen from the tail bound
//! P(max_{k<=h} |S_k|_1 >= R) <= 2^d (h+1) exp(-R^2 / 2h): mass crossing the
//! boundary is absorbed, and the retained-mass deficit is recorded so callers
//! can audit the truncation. All arithmetic is in fixed order; the parallel
//! sweep partitions output slots into fixed chunks, so results do not depend
//! on the number of threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

const COORD_BITS: u32 = 10;
const MAX_PACKED_RADIUS: u32 = (1 << COORD_BITS) - 1;
const SINK: u32 = u32::MAX;
/// Fixed parallel chunk size; part of the determinism contract.
const CHUNK: usize = 8192;

/// Truncation radius giving neglected mass at most eps over `horizon` steps.
pub(crate) fn radius_for(dim: usize, horizon: usize, eps: f64) -> u32 {
    let h = horizon.max(1) as f64;
    let log_term = (dim as f64) * std::f64::consts::LN_2 + ((h + 1.0) / eps).ln();
    let r = (2.0 * h * log_term).sqrt().ceil() as u32;
    r.min(horizon as u32).max(1)
}

/// Number of non-increasing d-tuples of non-negative integers with sum <= r:
/// partitions of 0..=r into at most d parts.
fn orbit_count(dim: usize, r: u32) -> u64 {
    let r = r as usize;
    // parts[s] = number of partitions of s into at most j parts.
    let mut parts = vec![0u64; r + 1];
    parts[0] = 1;
    for j in 1..=dim {
        for s in j..=r {
            parts[s] += parts[s - j];
        }
    }
    parts.iter().sum()
}

#[inline]
fn pack(coords: &[u16], dim: usize) -> u64 {
    let mut key = 0u64;
    for i in 0..dim {
        key = (key << COORD_BITS) | coords[i] as u64;
    }
    key
}

#[inline]
fn unpack(key: u64, dim: usize, out: &mut [u16]) {
    let mask = (1u64 << COORD_BITS) - 1;
    for i in (0..dim).rev() {
        out[i] = (key >> (COORD_BITS * (dim - 1 - i) as u32)) as u64 as u16 & mask as u16;
    }
}

/// Canonical key of a lattice point: absolute coordinates sorted decreasing.
fn canonical_key(coords: &[i64], dim: usize) -> Option<u64> {
    let mut abs = [0u16; 6];
    for i in 0..dim {
        let a = coords[i].unsigned_abs();
        if a > MAX_PACKED_RADIUS as u64 {
            return None;
        }
        abs[i] = a as u16;
    }
    abs[..dim].sort_unstable_by(|a, b| b.cmp(a));
    Some(pack(&abs, dim))
}

/// Kernel table over one truncated ball: Green sums per orbit plus the
/// return-probability series at the origin.
#[derive(Debug)]
pub(crate) struct LatticeTable {
    dim: usize,
    pub horizon: usize,
    pub radius: u32,
    /// Canonical packed keys in ascending order; parallel to `green`.
    keys: Vec<u64>,
    /// green[i] = sum_{k<=horizon} p_k(rep_i).
    green: Vec<f64>,
    /// origin_series[k] = p_k(identity), k = 0..=horizon.
    pub origin_series: Vec<f64>,
    /// Green sums frozen at an intermediate time, when requested at build.
    checkpoint: Option<(usize, Vec<f64>)>,
    /// 1 - total retained mass at the horizon; bounds the truncation error.
    pub mass_deficit: f64,
}

impl LatticeTable {
    /// Builds the table for Z^dim with standard generators.
    ///
    /// `eps` bounds the probability mass lost to truncation over the whole
    /// horizon. Fails with BallTooLarge when the orbit count would exceed
    /// `cap`; the reported radius is the largest that fits.
    pub fn build(dim: usize, horizon: usize, eps: f64, cap: usize) -> Result<Self> {
        Self::build_checkpointed(dim, horizon, None, eps, cap)
    }

    /// Same as `build`, additionally freezing a copy of the Green sums after
    /// `checkpoint_at` steps so one DP pass serves two horizons.
    pub fn build_checkpointed(
        dim: usize,
        horizon: usize,
        checkpoint_at: Option<usize>,
        eps: f64,
        cap: usize,
    ) -> Result<Self> {
        if let Some(c) = checkpoint_at {
            assert!(c <= horizon, "checkpoint must not exceed the horizon");
        }
        assert!((1..=6).contains(&dim), "orbit table supports dimensions 1..=6");
        assert!(eps > 0.0);
        let radius = radius_for(dim, horizon, eps);
        if radius > MAX_PACKED_RADIUS {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} needs truncation radius {radius}, beyond the packed limit {MAX_PACKED_RADIUS}"
            )));
        }
        if orbit_count(dim, radius) > cap as u64 {
            let mut fit = 0u32;
            for r in (0..radius).rev() {
                if orbit_count(dim, r) <= cap as u64 {
                    fit = r;
                    break;
                }
            }
            return Err(Error::BallTooLarge { cap, radius_reached: fit });
        }

        // Enumerate canonical representatives in lexicographic order of the
        // sorted coordinate tuple; packing is order-preserving, so keys come
        // out ascending.
        let mut keys = Vec::with_capacity(orbit_count(dim, radius) as usize);
        let mut coords = [0u16; 6];
        enumerate_reps(dim, radius as u16, 0, radius as u16, &mut coords, &mut keys);
        let reps = keys.len();
        debug_assert_eq!(reps as u64, orbit_count(dim, radius));
        debug_assert_eq!(keys[0], 0);

        // Orbit cardinalities and the 2d in-neighbours of each representative.
        let mut cards = vec![0.0f64; reps];
        let mut neighbors = vec![SINK; reps * 2 * dim];
        neighbors
            .par_chunks_mut(2 * dim * CHUNK)
            .zip(cards.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(chunk_idx, (nbr_chunk, card_chunk))| {
                let base = chunk_idx * CHUNK;
                let mut rep = [0u16; 6];
                let mut point = [0i64; 6];
                for local in 0..card_chunk.len() {
                    let i = base + local;
                    unpack(keys[i], dim, &mut rep);
                    card_chunk[local] = orbit_cardinality(&rep[..dim]);
                    for j in 0..dim {
                        point[j] = rep[j] as i64;
                    }
                    for j in 0..dim {
                        for (slot, delta) in [(2 * j, 1i64), (2 * j + 1, -1i64)] {
                            point[j] += delta;
                            let idx = match canonical_key(&point[..dim], dim) {
                                Some(key) => match keys.binary_search(&key) {
                                    Ok(pos) => pos as u32,
                                    Err(_) => SINK,
                                },
                                None => SINK,
                            };
                            nbr_chunk[2 * dim * local + slot] = idx;
                            point[j] -= delta;
                        }
                    }
                }
            });

        let mut cur = vec![0.0f64; reps];
        let mut next = vec![0.0f64; reps];
        let mut green = vec![0.0f64; reps];
        cur[0] = 1.0;
        green[0] = 1.0;
        let mut origin_series = Vec::with_capacity(horizon + 1);
        origin_series.push(1.0);
        let weight = 1.0 / (2 * dim) as f64;
        let mut checkpoint = match checkpoint_at {
            Some(0) => Some((0, green.clone())),
            _ => None,
        };

        for step in 1..=horizon {
            next.par_chunks_mut(CHUNK)
                .zip(neighbors.par_chunks(2 * dim * CHUNK))
                .for_each(|(out, nbr)| {
                    for (local, slot) in out.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for &t in &nbr[2 * dim * local..2 * dim * (local + 1)] {
                            if t != SINK {
                                acc += cur[t as usize];
                            }
                        }
                        *slot = acc * weight;
                    }
                });
            std::mem::swap(&mut cur, &mut next);
            green
                .par_chunks_mut(CHUNK)
                .zip(cur.par_chunks(CHUNK))
                .for_each(|(g, p)| {
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi += pi;
                    }
                });
            origin_series.push(cur[0]);
            if checkpoint_at == Some(step) {
                checkpoint = Some((step, green.clone()));
            }
        }

        let retained: f64 = cur
            .par_chunks(CHUNK)
            .zip(cards.par_chunks(CHUNK))
            .map(|(p, c)| {
                let mut acc = 0.0;
                for (pi, ci) in p.iter().zip(c) {
                    acc += pi * ci;
                }
                acc
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();

        Ok(LatticeTable {
            dim,
            horizon,
            radius,
            keys,
            green,
            origin_series,
            checkpoint,
            mass_deficit: 1.0 - retained,
        })
    }

    /// Truncated Green value G_horizon(x) for the point with the given
    /// coordinates; zero beyond the truncation radius, where the true value
    /// is below the mass deficit.
    pub fn green_at(&self, coords: &[i64]) -> f64 {
        debug_assert_eq!(coords.len(), self.dim);
        match canonical_key(coords, self.dim) {
            Some(key) => match self.keys.binary_search(&key) {
                Ok(pos) => self.green[pos],
                Err(_) => 0.0,
            },
            None => 0.0,
        }
    }

    pub fn green_at_origin(&self) -> f64 {
        self.green[0]
    }

    /// Green value at the frozen intermediate time, if one was requested.
    pub fn checkpoint_green_at(&self, coords: &[i64]) -> Option<f64> {
        let (_, snapshot) = self.checkpoint.as_ref()?;
        debug_assert_eq!(coords.len(), self.dim);
        let key = canonical_key(coords, self.dim)?;
        match self.keys.binary_search(&key) {
            Ok(pos) => Some(snapshot[pos]),
            Err(_) => Some(0.0),
        }
    }

    pub fn checkpoint_time(&self) -> Option<usize> {
        self.checkpoint.as_ref().map(|(t, _)| *t)
    }
}

fn enumerate_reps(
    dim: usize,
    budget: u16,
    depth: usize,
    max_part: u16,
    coords: &mut [u16; 6],
    keys: &mut Vec<u64>,
) {
    if depth == dim {
        keys.push(pack(coords, dim));
        return;
    }
    let hi = budget.min(max_part);
    for v in 0..=hi {
        coords[depth] = v;
        enumerate_reps(dim, budget - v, depth + 1, v, coords, keys);
    }
    coords[depth] = 0;
}

/// Orbit size of a sorted absolute-coordinate tuple under signed
/// permutations: d!/(multiplicity factorials) * 2^(non-zero count).
fn orbit_cardinality(rep: &[u16]) -> f64 {
    let mut perms = 1.0f64;
    for i in 1..=rep.len() {
        perms *= i as f64;
    }
    let mut i = 0;
    while i < rep.len() {
        let mut j = i + 1;
        while j < rep.len() && rep[j] == rep[i] {
            j += 1;
        }
        let mut fact = 1.0f64;
        for m in 1..=(j - i) {
            fact *= m as f64;
        }
        perms /= fact;
        i = j;
    }
    let nonzero = rep.iter().filter(|&&v| v != 0).count();
    perms * (1u64 << nonzero) as f64
}

/// Return-probability series p_k(e), k = 0..=n_max, for Z^dim standard
/// generators, with truncation mass below eps.
pub(crate) fn origin_series(
    dim: usize,
    n_max: usize,
    eps: f64,
    cap: usize,
) -> Result<Vec<f64>> {
    let table = LatticeTable::build(dim, n_max, eps, cap)?;
    Ok(table.origin_series)
}
