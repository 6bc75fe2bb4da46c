//! Word-metric balls, breadth-first enumeration, and growth profiles.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupPresentation};
use crate::stats;

/// Closed ball {g : rho(g) <= radius}, enumerated breadth first.
///
/// Elements are ordered by word length, then by canonical element order
/// within each sphere, so indices are reproducible across runs.
#[derive(Debug, Clone)]
pub struct Ball {
    radius: u32,
    elements: Vec<GroupElement>,
    /// sphere_offsets[r]..sphere_offsets[r+1] indexes the sphere at distance r.
    sphere_offsets: Vec<usize>,
    index: FxHashMap<GroupElement, usize>,
}

impl Ball {
    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn sphere(&self, r: u32) -> &[GroupElement] {
        if r > self.radius {
            return &[];
        }
        let r = r as usize;
        &self.elements[self.sphere_offsets[r]..self.sphere_offsets[r + 1]]
    }

    /// Number of elements with rho(g) <= r.
    pub fn ball_size(&self, r: u32) -> usize {
        let r = r.min(self.radius) as usize;
        self.sphere_offsets[r + 1]
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    /// Exact word length for elements inside the ball; None outside.
    pub fn word_length(&self, g: &GroupElement) -> Option<u32> {
        let i = *self.index.get(g)?;
        Some(self.length_by_index(i))
    }

    pub fn length_by_index(&self, i: usize) -> u32 {
        debug_assert!(i < self.elements.len());
        (self.sphere_offsets.partition_point(|&off| off <= i) - 1) as u32
    }
}

/// Breadth-first closed ball of the given radius.
///
/// Fails with `BallTooLarge` if the enumeration would exceed `cap` elements;
/// the error reports the last fully enumerated radius.
pub fn ball(group: &GroupPresentation, radius: u32, cap: usize) -> Result<Ball> {
    if cap == 0 {
        return Err(Error::BallTooLarge { cap, radius_reached: 0 });
    }
    let id = group.identity();
    let mut elements = vec![id.clone()];
    let mut index = FxHashMap::default();
    index.insert(id, 0usize);
    let mut sphere_offsets = vec![0usize, 1];

    for r in 0..radius {
        let lo = sphere_offsets[r as usize];
        let hi = sphere_offsets[r as usize + 1];
        let mut new_sphere: Vec<GroupElement> = Vec::new();
        for i in lo..hi {
            let base = elements[i].clone();
            for gi in 0..group.generator_count() {
                let mut g = base.clone();
                group.apply_generator(&mut g, gi);
                if !index.contains_key(&g) {
                    // Placeholder marks the element as seen; the real index is
                    // assigned after the sphere is sorted.
                    index.insert(g.clone(), usize::MAX);
                    new_sphere.push(g);
                }
            }
        }
        if elements.len() + new_sphere.len() > cap {
            for g in &new_sphere {
                index.remove(g);
            }
            return Err(Error::BallTooLarge { cap, radius_reached: r });
        }
        new_sphere.sort_unstable();
        for g in new_sphere {
            index.insert(g.clone(), elements.len());
            elements.push(g);
        }
        sphere_offsets.push(elements.len());
    }

    Ok(Ball { radius, elements, sphere_offsets, index })
}

/// Open ball {g : rho(g) < radius}; empty for radius 0.
pub fn open_ball(group: &GroupPresentation, radius: u32, cap: usize) -> Result<Ball> {
    if radius == 0 {
        return Ok(Ball {
            radius: 0,
            elements: Vec::new(),
            sphere_offsets: vec![0, 0],
            index: FxHashMap::default(),
        });
    }
    ball(group, radius - 1, cap)
}

/// Word metric evaluation strategy.
///
/// Standard generator sets admit closed forms; anything else falls back to a
/// breadth-first distance table, which only covers a finite radius.
#[derive(Debug)]
pub enum WordMetric {
    LatticeL1,
    ReducedWordLength,
    Table(Ball),
}

impl WordMetric {
    /// Picks the cheapest exact metric for the group. `table_radius` bounds
    /// the BFS fallback when no closed form applies.
    pub fn for_group(group: &GroupPresentation, table_radius: u32, cap: usize) -> Result<Self> {
        if group.has_standard_lattice_generators() {
            return Ok(WordMetric::LatticeL1);
        }
        if group.has_standard_free_product_generators() {
            return Ok(WordMetric::ReducedWordLength);
        }
        Ok(WordMetric::Table(ball(group, table_radius, cap)?))
    }

    /// Word length of g, or None when g falls outside a table's range.
    pub fn distance(&self, g: &GroupElement) -> Option<u32> {
        match self {
            WordMetric::LatticeL1 => match g {
                GroupElement::Lattice(v) => {
                    Some(v.iter().map(|x| x.unsigned_abs()).sum::<u64>() as u32)
                }
                _ => panic!("l1 metric on non-lattice element"),
            },
            WordMetric::ReducedWordLength => match g {
                GroupElement::Word(w) => Some(w.len() as u32),
                _ => panic!("word-length metric on non-word element"),
            },
            WordMetric::Table(ball) => ball.word_length(g),
        }
    }
}

/// Ball sizes V(0..=r_max) with a fitted polynomial growth index.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthProfile {
    pub radii: Vec<u32>,
    pub ball_sizes: Vec<u64>,
    pub fitted_index: f64,
    pub fitted_index_stderr: f64,
    pub superpolynomial: bool,
}

/// Enumerates one ball of radius `r_max` and fits log V(n) against log n by
/// least squares over the upper half of the radius range.
///
/// The superpolynomial flag is heuristic: it is raised when the fitted index
/// exceeds 8, or when log V(n) over the fit window is much less concave than
/// the fitted power law implies (a power law forces second differences near
/// d * d2[log n]; exponential growth makes them vanish).
pub fn growth_profile(group: &GroupPresentation, r_max: u32, cap: usize) -> Result<GrowthProfile> {
    if r_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "growth profile needs r_max >= 2, got {r_max}"
        )));
    }
    let b = ball(group, r_max, cap)?;
    let radii: Vec<u32> = (0..=r_max).collect();
    let ball_sizes: Vec<u64> = radii.iter().map(|&r| b.ball_size(r) as u64).collect();

    let lo = (r_max as usize).div_ceil(2).max(1);
    let log_r: Vec<f64> = (lo..=r_max as usize).map(|r| (r as f64).ln()).collect();
    let log_v: Vec<f64> = (lo..=r_max as usize).map(|r| (ball_sizes[r] as f64).ln()).collect();
    let fit = stats::fit_linear(&log_r, &log_v);
    let fitted_index = fit.slope.max(0.0);

    let mut obs_sum = 0.0;
    let mut exp_sum = 0.0;
    let mut count = 0usize;
    for r in (lo + 1)..(r_max as usize) {
        let lv = |n: usize| (ball_sizes[n] as f64).ln();
        let ln = |n: usize| (n as f64).ln();
        obs_sum += lv(r + 1) - 2.0 * lv(r) + lv(r - 1);
        exp_sum += fitted_index * (ln(r + 1) - 2.0 * ln(r) + ln(r - 1));
        count += 1;
    }
    let convex_enough = if count > 0 {
        let obs = obs_sum / count as f64;
        let expected = exp_sum / count as f64;
        obs > 0.5 * expected + 1e-9
    } else {
        false
    };
    let superpolynomial = convex_enough || fitted_index > 8.0;

    Ok(GrowthProfile {
        radii,
        ball_sizes,
        fitted_index,
        fitted_index_stderr: fit.slope_stderr,
        superpolynomial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, GroupSpec};

    fn z(d: usize) -> GroupPresentation {
        make_group(&GroupSpec::lattice(d)).unwrap()
    }

    const CAP: usize = 1 << 22;

    #[test]
    fn small_lattice_balls_have_known_sizes() {
        let g = z(2);
        assert_eq!(ball(&g, 0, CAP).unwrap().len(), 1);
        assert_eq!(ball(&g, 1, CAP).unwrap().len(), 5);
        assert_eq!(ball(&g, 2, CAP).unwrap().len(), 13);
    }

    /// Brute-force count of integer points with l1 norm <= n.
    fn l1_count(d: usize, n: i64) -> u64 {
        fn rec(d: usize, budget: i64) -> u64 {
            if d == 0 {
                return 1;
            }
            (-budget..=budget)
                .map(|x| rec(d - 1, budget - x.abs()))
                .sum()
        }
        rec(d, n)
    }

    #[test]
    fn lattice_ball_sizes_match_l1_point_counts() {
        for d in 1..=3usize {
            let g = z(d);
            let b = ball(&g, 6, CAP).unwrap();
            for n in 0..=6u32 {
                assert_eq!(b.ball_size(n) as u64, l1_count(d, n as i64), "d={d} n={n}");
            }
        }
    }

    #[test]
    fn sparse_generators_change_the_metric() {
        let spec = GroupSpec::lattice_with_generators(
            1,
            vec![vec![2], vec![-2], vec![3], vec![-3]],
        );
        let g = make_group(&spec).unwrap();
        let b = ball(&g, 4, CAP).unwrap();
        assert_eq!(b.word_length(&GroupElement::lattice(&[1])), Some(2));
        assert_eq!(b.word_length(&GroupElement::lattice(&[2])), Some(1));
        assert_eq!(b.word_length(&GroupElement::lattice(&[5])), Some(2));
    }

    #[test]
    fn cap_overflow_reports_partial_radius() {
        let g = z(2);
        // B(0..=2) has sizes 1, 5, 13; a cap of 12 admits radius 1 only.
        match ball(&g, 5, 12) {
            Err(Error::BallTooLarge { cap, radius_reached }) => {
                assert_eq!(cap, 12);
                assert_eq!(radius_reached, 1);
            }
            other => panic!("expected BallTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn balls_nest_and_lengths_agree() {
        let g = make_group(&GroupSpec::heisenberg()).unwrap();
        let small = ball(&g, 3, CAP).unwrap();
        let large = ball(&g, 5, CAP).unwrap();
        for e in small.elements() {
            assert_eq!(small.word_length(e), large.word_length(e));
        }
        assert!(small.len() < large.len());
    }

    #[test]
    fn open_ball_drops_the_boundary_sphere() {
        let g = z(2);
        assert_eq!(open_ball(&g, 0, CAP).unwrap().len(), 0);
        assert_eq!(open_ball(&g, 1, CAP).unwrap().len(), 1);
        assert_eq!(open_ball(&g, 3, CAP).unwrap().len(), ball(&g, 2, CAP).unwrap().len());
    }

    #[test]
    fn metric_properties_hold_on_small_balls() {
        for spec in [GroupSpec::lattice(2), GroupSpec::heisenberg(), GroupSpec::free_product_z2(3)] {
            let g = make_group(&spec).unwrap();
            let b3 = ball(&g, 3, CAP).unwrap();
            let b6 = ball(&g, 6, CAP).unwrap();
            for a in b3.elements() {
                let ra = b3.word_length(a).unwrap();
                assert_eq!(b6.word_length(&g.inverse(a)), Some(ra));
                assert_eq!(ra == 0, g.is_identity(a));
                for c in b3.elements() {
                    let rc = b3.word_length(c).unwrap();
                    let prod = g.multiply(a, c);
                    let rp = b6.word_length(&prod).unwrap();
                    assert!(rp <= ra + rc, "triangle inequality violated");
                }
            }
        }
    }

    #[test]
    fn closed_form_metrics_match_bfs() {
        let g = z(3);
        let m = WordMetric::for_group(&g, 4, CAP).unwrap();
        assert!(matches!(m, WordMetric::LatticeL1));
        let b = ball(&g, 4, CAP).unwrap();
        for e in b.elements() {
            assert_eq!(m.distance(e), b.word_length(e));
        }

        let t = make_group(&GroupSpec::free_product_z2(3)).unwrap();
        let mt = WordMetric::for_group(&t, 4, CAP).unwrap();
        assert!(matches!(mt, WordMetric::ReducedWordLength));
        let bt = ball(&t, 4, CAP).unwrap();
        for e in bt.elements() {
            assert_eq!(mt.distance(e), bt.word_length(e));
        }

        let h = make_group(&GroupSpec::heisenberg()).unwrap();
        let mh = WordMetric::for_group(&h, 4, CAP).unwrap();
        assert!(matches!(mh, WordMetric::Table(_)));
        assert_eq!(mh.distance(&GroupElement::heisenberg(0, 0, 1)), Some(4));
    }

    #[test]
    fn lattice_growth_index_near_dimension() {
        let p = growth_profile(&z(3), 10, CAP).unwrap();
        assert!(p.fitted_index > 2.6 && p.fitted_index < 3.4, "index {}", p.fitted_index);
        assert!(!p.superpolynomial);
        assert_eq!(p.ball_sizes[0], 1);
        assert!(p.ball_sizes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn heisenberg_growth_index_near_four() {
        let g = make_group(&GroupSpec::heisenberg()).unwrap();
        let p = growth_profile(&g, 12, CAP).unwrap();
        assert!(p.fitted_index > 3.4 && p.fitted_index < 4.6, "index {}", p.fitted_index);
        assert!(!p.superpolynomial);
    }

    #[test]
    fn free_product_growth_is_flagged_superpolynomial() {
        let g = make_group(&GroupSpec::free_product_z2(3)).unwrap();
        let p = growth_profile(&g, 12, CAP).unwrap();
        assert!(p.superpolynomial, "fitted index {}", p.fitted_index);
        // V(n) = 1 + 3 (2^n - 1): each level adds 3 * 2^(n-1) new reduced words.
        for (n, &v) in p.ball_sizes.iter().enumerate() {
            assert_eq!(v, 1 + 3 * ((1u64 << n) - 1));
        }
    }
}
