//! Capacity decomposition checks on split paths.

use super::{capacity_mc, cross_green, CapacityEstimate, EscapeConfig, GreenCache, StreamPolicy};
use crate::error::Result;
use crate::group::GroupPresentation;
use crate::walk::{range_of, RangeSet, WalkPath};
use serde::{Deserialize, Serialize};

/// Margins for Cap(A) + Cap(B) - 2G(A,B) <= Cap(A u B) <= Cap(A) + Cap(B)
/// - Cap(A n B) on one pair of sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub cap_a: CapacityEstimate,
    pub cap_b: CapacityEstimate,
    pub cap_union: CapacityEstimate,
    pub cap_intersection: CapacityEstimate,
    pub cross_green: f64,
    /// cap_union.point - (cap_a + cap_b - 2 cross_green); expected >= 0.
    pub lower_margin: f64,
    /// (cap_a + cap_b - cap_intersection) - cap_union.point; expected >= 0.
    pub upper_margin: f64,
    /// Root-sum-square of the four standard errors; conservative under the
    /// point-keyed coupling, which correlates the estimates positively.
    pub combined_std_error: f64,
}

/// Evaluates both decomposition inequalities on explicit sets.
///
/// All four capacities run under point-keyed trial streams with one shared
/// seed, so an element draws identical trial paths in every set containing
/// it; escape counts are then monotone under set inclusion samplewise.
pub fn sandwich_on_sets(
    group: &GroupPresentation,
    cache: &GreenCache,
    a: &RangeSet,
    b: &RangeSet,
    cfg: &EscapeConfig,
) -> SandwichReport {
    let coupled = cfg.with_policy(StreamPolicy::ByPoint);
    let union = a.union(b);
    let intersection = a.intersection(b);
    let cap_a = capacity_mc(group, a.elements(), &coupled);
    let cap_b = capacity_mc(group, b.elements(), &coupled);
    let cap_union = capacity_mc(group, union.elements(), &coupled);
    let cap_intersection = capacity_mc(group, intersection.elements(), &coupled);
    let g_ab = cross_green(group, cache, a.elements(), b.elements());

    let lower = cap_a.point + cap_b.point - 2.0 * g_ab;
    let upper = cap_a.point + cap_b.point - cap_intersection.point;
    let combined = [&cap_a, &cap_b, &cap_union, &cap_intersection]
        .iter()
        .map(|e| e.std_error.unwrap_or(0.0).powi(2))
        .sum::<f64>()
        .sqrt();
    SandwichReport {
        lower_margin: cap_union.point - lower,
        upper_margin: upper - cap_union.point,
        combined_std_error: combined,
        cap_a,
        cap_b,
        cap_union,
        cap_intersection,
        cross_green: g_ab,
    }
}

/// Splits a walk of length n + m at time m into A = S_m^{-1} R[0, m] and
/// B = S_m^{-1} R[m, n + m] and checks the sandwich on them. The common
/// left translation keeps the union a translate of the full range, so the
/// inequalities are checked on the genuine decomposition of R_{n+m}.
pub fn capacity_sandwich_check(
    group: &GroupPresentation,
    cache: &GreenCache,
    path: &WalkPath,
    m: usize,
    cfg: &EscapeConfig,
) -> Result<SandwichReport> {
    let n_total = path.len();
    let shift = group.inverse(&path.positions[m]);
    let a = range_of(path, 0, m)?.translated(group, &shift);
    let b = range_of(path, m, n_total)?.translated(group, &shift);
    Ok(sandwich_on_sets(group, cache, &a, &b, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, decode_element, GroupSpec};
    use crate::potential::GreenParams;
    use crate::walk::simulate;
    use std::sync::Arc;

    fn lattice(dim: usize) -> Arc<GroupPresentation> {
        Arc::new(make_group(&GroupSpec::lattice(dim)).unwrap())
    }

    #[test]
    fn identical_sets_collapse_the_upper_side() {
        let group = lattice(5);
        let cache = GreenCache::build(&group, 50, &GreenParams::default()).unwrap();
        let path = simulate(&group, 40, 61, 0);
        let r = range_of(&path, 0, 40).unwrap();
        let report = sandwich_on_sets(&group, &cache, &r, &r, &EscapeConfig::new(200, 60, 5));
        // A = B: all four estimates share every count, so the upper side is
        // exactly Cap(A) <= Cap(A).
        assert_eq!(report.upper_margin, 0.0);
        assert_eq!(report.cap_a.point, report.cap_union.point);
        // Lower side: 2G(A,A) - Cap(A) >= 0 because the diagonal of the
        // Green matrix already dominates escape probabilities.
        assert!(report.lower_margin >= 0.0);
    }

    #[test]
    fn far_singletons_are_nearly_additive() {
        let group = lattice(5);
        let cache = GreenCache::build(&group, 60, &GreenParams::default()).unwrap();
        let a = RangeSet::from_elements([group.identity()]);
        let far = decode_element(&group, "6;0;0;0;0").unwrap();
        let b = RangeSet::from_elements([far]);
        let cfg = EscapeConfig::new(400, 400, 9);
        let report = sandwich_on_sets(&group, &cache, &a, &b, &cfg);
        assert!(report.cross_green < 0.05, "cross green {}", report.cross_green);
        assert!(report.cap_intersection.point == 0.0);
        let gap = report.cap_a.point + report.cap_b.point - report.cap_union.point;
        assert!(
            gap.abs() <= 2.0 * report.cross_green + 3.0 * report.combined_std_error,
            "gap {gap} cross {}",
            report.cross_green
        );
    }

    #[test]
    fn split_paths_satisfy_both_inequalities_within_noise() {
        let group = lattice(5);
        // The truncated cross-Green under-subtracts by about
        // |A| |B| tail(horizon); horizon 128 keeps that far below the
        // trial noise at this path length.
        let cache = GreenCache::build(
            &group,
            128,
            &GreenParams { eps: 1e-4, ..Default::default() },
        )
        .unwrap();
        let cfg = EscapeConfig::new(500, 50, 13);
        for seed in 0..12 {
            let path = simulate(&group, 64, 100 + seed, 0);
            let report = capacity_sandwich_check(&group, &cache, &path, 32, &cfg).unwrap();
            let tol = 3.0 * report.combined_std_error;
            assert!(
                report.upper_margin >= -tol,
                "seed {seed}: upper margin {} tol {tol}",
                report.upper_margin
            );
            assert!(
                report.lower_margin >= -tol,
                "seed {seed}: lower margin {} tol {tol}",
                report.lower_margin
            );
        }
    }

    #[test]
    fn subadditivity_alone_is_exact_under_coupling() {
        // Without the intersection term the upper inequality holds
        // samplewise: every union point replays its trials from some block.
        let group = lattice(5);
        let cfg = EscapeConfig::new(300, 40, 17).with_policy(StreamPolicy::ByPoint);
        for seed in 0..10 {
            let path = simulate(&group, 96, 300 + seed, 0);
            let a = range_of(&path, 0, 48).unwrap();
            let b = range_of(&path, 48, 96).unwrap();
            let union = a.union(&b);
            let cap_a = capacity_mc(&group, a.elements(), &cfg);
            let cap_b = capacity_mc(&group, b.elements(), &cfg);
            let cap_u = capacity_mc(&group, union.elements(), &cfg);
            assert!(
                cap_u.point <= cap_a.point + cap_b.point + 1e-12,
                "seed {seed}: {} vs {} + {}",
                cap_u.point,
                cap_a.point,
                cap_b.point
            );
        }
    }
}
