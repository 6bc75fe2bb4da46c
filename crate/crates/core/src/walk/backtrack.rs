//! Double-backtrack decomposition: a walk with no double-backtracks at even
//! times, plus geometric insertion counts that reconstruct a plain walk.
//!
//! A double backtrack at even time 2k+2 means S_{2k+1} = S_{2k-1} and
//! S_{2k+2} = S_{2k}, i.e. the pair (X_{2k+1}, X_{2k+2}) equals
//! (X_{2k}^-1, X_{2k}). The backbone walk draws each even-time step pair
//! uniformly from the |Gamma|^2 - 1 pairs that avoid this; re-inserting a
//! geometric number of backtracks after every even time recovers the law of
//! the unconstrained walk.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::GroupPresentation;
use crate::rng::{derive, WalkRng};
use crate::walk::{range_of, WalkPath};

/// Seed-derivation tag for the geometric insertion counts.
const COUNT_TAG: u64 = 0x6274_6b74;

#[derive(Debug, Clone)]
pub struct BacktrackDecomposition {
    pub backbone: WalkPath,
    /// counts[k-1] is the number of backtrack pairs inserted after even
    /// backbone time 2k.
    pub counts: Vec<u64>,
    /// partial_sums[k] = N_{2k} = counts[0] + .. + counts[k-1]; entry 0 is 0.
    pub partial_sums: Vec<u64>,
    pub reconstructed: WalkPath,
    /// insertion_intervals[k-1] is the half-open index range of reconstructed
    /// positions filled by the k-th insertion block; empty when counts[k-1]
    /// is zero. Equals [2k + 2 N_{2(k-1)} + 1, 2k + 2 N_{2k}] as a closed
    /// interval.
    pub insertion_intervals: Vec<std::ops::Range<usize>>,
}

impl BacktrackDecomposition {
    /// Total number of inserted backtrack pairs N_{2 * pairs}.
    pub fn total_insertions(&self) -> u64 {
        *self.partial_sums.last().unwrap()
    }
}

/// Simulates a walk whose even-time step pairs never double-backtrack.
///
/// The first pair is unconstrained; each later pair is uniform over the
/// |Gamma|^2 - 1 admissible pairs, sampled by drawing one index and skipping
/// the excluded one. Odd n draws the final pair and keeps its first step.
pub fn simulate_no_backtrack(
    group: &Arc<GroupPresentation>,
    n: usize,
    seed: u64,
    stream_id: u64,
) -> Result<WalkPath> {
    let m = group.generator_count();
    if m < 2 {
        return Err(Error::DegenerateGenerators(m));
    }
    let inv_idx = group.inverse_generator_indices();
    let mut rng = WalkRng::new(seed, stream_id);
    let mut steps: Vec<u32> = Vec::with_capacity(n + 1);
    let mut positions = Vec::with_capacity(n + 2);
    positions.push(group.identity());

    let mut prev_y: Option<u32> = None;
    for _ in 0..n.div_ceil(2) {
        let idx = match prev_y {
            None => rng.index(m * m),
            Some(py) => {
                let excluded = inv_idx[py as usize] * m + py as usize;
                let mut i = rng.index(m * m - 1);
                if i >= excluded {
                    i += 1;
                }
                i
            }
        };
        let x = (idx / m) as u32;
        let y = (idx % m) as u32;
        for s in [x, y] {
            let mut next = positions.last().unwrap().clone();
            group.apply_generator(&mut next, s as usize);
            steps.push(s);
            positions.push(next);
        }
        prev_y = Some(y);
    }
    steps.truncate(n);
    positions.truncate(n + 1);
    Ok(WalkPath { group: Arc::clone(group), steps, positions, seed, stream_id })
}

/// Replays the backbone with `counts[k-1]` backtrack pairs inserted after
/// each even time 2k. Needs one count per backbone pair.
pub fn insert_backtracks(
    backbone: &WalkPath,
    counts: &[u64],
) -> Result<BacktrackDecomposition> {
    let nb = backbone.len();
    let pairs = nb / 2;
    if counts.len() < pairs {
        return Err(Error::InsufficientCounts { have: counts.len(), need: pairs });
    }
    let group = &backbone.group;
    let inv_idx = group.inverse_generator_indices();

    let head = nb.min(2);
    let mut positions: Vec<_> = backbone.positions[..=head].to_vec();
    let mut steps: Vec<u32> = backbone.steps[..head].to_vec();
    let mut intervals = Vec::with_capacity(pairs);
    let mut partial_sums = Vec::with_capacity(pairs + 1);
    partial_sums.push(0u64);
    let mut total = 0u64;

    for k in 1..=pairs {
        let xi = counts[k - 1];
        let start = positions.len();
        let fwd = backbone.steps[2 * k - 1];
        let back = inv_idx[fwd as usize] as u32;
        for _ in 0..xi {
            steps.push(back);
            positions.push(backbone.positions[2 * k - 1].clone());
            steps.push(fwd);
            positions.push(backbone.positions[2 * k].clone());
        }
        total += xi;
        partial_sums.push(total);
        intervals.push(start..positions.len());
        if k < pairs {
            for j in [2 * k, 2 * k + 1] {
                steps.push(backbone.steps[j]);
                positions.push(backbone.positions[j + 1].clone());
            }
        } else if nb % 2 == 1 {
            steps.push(backbone.steps[nb - 1]);
            positions.push(backbone.positions[nb].clone());
        }
    }

    let reconstructed = WalkPath {
        group: Arc::clone(group),
        steps,
        positions,
        seed: backbone.seed,
        stream_id: backbone.stream_id,
    };
    debug_assert!(reconstructed.is_valid());
    Ok(BacktrackDecomposition {
        backbone: backbone.clone(),
        counts: counts[..pairs].to_vec(),
        partial_sums,
        reconstructed,
        insertion_intervals: intervals,
    })
}

/// Draws a backbone of length n plus geometric insertion counts with failure
/// probability 1/|Gamma|^2 and assembles the decomposition. The counts use a
/// seed derived from the path seed so the pair (backbone, counts) replays.
pub fn simulate_via_backtracks(
    group: &Arc<GroupPresentation>,
    n: usize,
    seed: u64,
    stream_id: u64,
) -> Result<BacktrackDecomposition> {
    let backbone = simulate_no_backtrack(group, n, seed, stream_id)?;
    let m = group.generator_count() as f64;
    let q = 1.0 / (m * m);
    let mut rng = WalkRng::new(derive(seed, COUNT_TAG), stream_id);
    let counts: Vec<u64> = (0..n / 2).map(|_| rng.geometric_failures(q)).collect();
    insert_backtracks(&backbone, &counts)
}

/// True when the path makes a double backtrack at any even time, i.e.
/// positions[2k+1] = positions[2k-1] and positions[2k+2] = positions[2k].
pub fn has_even_time_double_backtrack(path: &WalkPath) -> bool {
    let p = &path.positions;
    (1..)
        .take_while(|k| 2 * k + 2 <= path.len())
        .any(|k| p[2 * k + 1] == p[2 * k - 1] && p[2 * k + 2] == p[2 * k])
}

/// Range identity of the construction: the backbone range up to time 2k
/// equals the reconstructed range up to 2k + 2 N_{2k}, for every k.
pub fn range_identity_holds(d: &BacktrackDecomposition) -> bool {
    let pairs = d.backbone.len() / 2;
    for k in 0..=pairs {
        let shifted = 2 * k + 2 * d.partial_sums[k] as usize;
        let a = range_of(&d.backbone, 0, 2 * k).unwrap();
        let b = range_of(&d.reconstructed, 0, shifted).unwrap();
        if a.len() != b.len() || a.elements() != b.elements() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, GroupElement, GroupSpec};
    use proptest::prelude::*;

    fn z1() -> Arc<GroupPresentation> {
        Arc::new(make_group(&GroupSpec::lattice(1)).unwrap())
    }

    fn forced_path(group: &Arc<GroupPresentation>, steps: Vec<u32>) -> WalkPath {
        let mut positions = vec![group.identity()];
        for &s in &steps {
            let mut next = positions.last().unwrap().clone();
            group.apply_generator(&mut next, s as usize);
            positions.push(next);
        }
        WalkPath { group: Arc::clone(group), steps, positions, seed: 0, stream_id: 0 }
    }

    fn lattice_coords(path: &WalkPath) -> Vec<i64> {
        path.positions
            .iter()
            .map(|e| match e {
                GroupElement::Lattice(v) => v[0],
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn worked_example_reconstruction() {
        // Backbone 0,1,2,3,4 with one insertion after time 2 and none after 4.
        let g = z1();
        let backbone = forced_path(&g, vec![0, 0, 0, 0]);
        let d = insert_backtracks(&backbone, &[1, 0]).unwrap();
        assert_eq!(lattice_coords(&d.reconstructed), vec![0, 1, 2, 1, 2, 3, 4]);
        assert_eq!(d.partial_sums, vec![0, 1, 1]);
        assert_eq!(d.insertion_intervals, vec![3..5, 7..7]);
        assert!(d.reconstructed.is_valid());
        assert!(range_identity_holds(&d));
    }

    #[test]
    fn zero_counts_reproduce_the_backbone() {
        let g = Arc::new(make_group(&GroupSpec::heisenberg()).unwrap());
        let backbone = simulate_no_backtrack(&g, 20, 5, 0).unwrap();
        let d = insert_backtracks(&backbone, &vec![0; 10]).unwrap();
        assert_eq!(d.reconstructed.positions, backbone.positions);
        assert_eq!(d.reconstructed.steps, backbone.steps);
    }

    #[test]
    fn interval_bounds_match_the_partial_sums() {
        let g = z1();
        let backbone = forced_path(&g, vec![0, 0, 1, 0, 0, 0]);
        let counts = [2u64, 0, 3];
        let d = insert_backtracks(&backbone, &counts).unwrap();
        for (k, iv) in d.insertion_intervals.iter().enumerate() {
            let k1 = k + 1;
            let lo = 2 * k1 + 2 * d.partial_sums[k] as usize + 1;
            let hi = 2 * k1 + 2 * d.partial_sums[k1] as usize;
            assert_eq!(iv.start, lo);
            assert_eq!(iv.end, hi + 1);
        }
        assert_eq!(
            d.reconstructed.len(),
            backbone.len() + 2 * d.total_insertions() as usize
        );
        assert!(range_identity_holds(&d));
    }

    #[test]
    fn missing_counts_are_rejected() {
        let g = z1();
        let backbone = forced_path(&g, vec![0, 0, 0, 0]);
        assert!(matches!(
            insert_backtracks(&backbone, &[3]),
            Err(Error::InsufficientCounts { have: 1, need: 2 })
        ));
    }

    #[test]
    fn single_generator_walks_are_degenerate() {
        let g = Arc::new(make_group(&GroupSpec::free_product_z2(1)).unwrap());
        assert!(matches!(
            simulate_no_backtrack(&g, 4, 0, 0),
            Err(Error::DegenerateGenerators(1))
        ));
    }

    #[test]
    fn backbone_never_double_backtracks_and_replays() {
        let g = Arc::new(make_group(&GroupSpec::free_product_z2(3)).unwrap());
        for seed in 0..40 {
            let p = simulate_no_backtrack(&g, 60, seed, 2).unwrap();
            assert!(p.is_valid());
            assert!(!has_even_time_double_backtrack(&p), "seed {seed}");
        }
        let a = simulate_no_backtrack(&g, 60, 7, 2).unwrap();
        let b = simulate_no_backtrack(&g, 60, 7, 2).unwrap();
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn plain_walks_do_double_backtrack_sometimes() {
        let g = z1();
        let hits = (0..200)
            .filter(|&seed| {
                has_even_time_double_backtrack(&crate::walk::simulate(&g, 40, seed, 0))
            })
            .count();
        assert!(hits > 100, "only {hits} of 200 plain walks double-backtracked");
    }

    #[test]
    fn admissible_pairs_are_uniform() {
        // d=1: 4 pairs, 1 excluded after the first draw; each remaining pair
        // should appear with frequency 1/3.
        let g = z1();
        let mut by_prev: std::collections::HashMap<(u32, u32), [u64; 4]> =
            std::collections::HashMap::new();
        let mut total_pairs = 0u64;
        for seed in 0..400 {
            let p = simulate_no_backtrack(&g, 500, seed, 9).unwrap();
            let pairs: Vec<(u32, u32)> =
                p.steps.chunks(2).map(|c| (c[0], c[1])).collect();
            total_pairs += pairs.len() as u64;
            for w in pairs.windows(2) {
                by_prev.entry(w[0]).or_default()[(w[1].0 * 2 + w[1].1) as usize] += 1;
            }
        }
        assert!(total_pairs > 90_000);
        let inv = [1u32, 0];
        for (prev, counts) in by_prev {
            let excluded = (inv[prev.1 as usize] * 2 + prev.1) as usize;
            assert_eq!(counts[excluded], 0, "excluded pair after {prev:?} was drawn");
            let n: u64 = counts.iter().sum();
            for (i, &c) in counts.iter().enumerate() {
                if i == excluded {
                    continue;
                }
                let freq = c as f64 / n as f64;
                let sigma = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
                assert!(
                    (freq - 1.0 / 3.0).abs() < 4.0 * sigma,
                    "pair {i} after {prev:?}: freq {freq}, n {n}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn reconstruction_is_valid_and_range_identity_holds(
            seed in 0u64..500,
            n in 0usize..60,
        ) {
            let g = Arc::new(make_group(&GroupSpec::free_product_z2(3)).unwrap());
            let d = simulate_via_backtracks(&g, n, seed, 4).unwrap();
            prop_assert!(d.reconstructed.is_valid());
            prop_assert!(!has_even_time_double_backtrack(&d.backbone));
            prop_assert!(range_identity_holds(&d));
            prop_assert_eq!(
                d.reconstructed.len(),
                d.backbone.len() + 2 * d.total_insertions() as usize
            );
        }
    }
}
