//! Pairwise Green sums over a walk's positions.
//!
//! T_n = sum over 0 <= j, k <= n of the truncated Green value at S_j^{-1} S_k.
//! Column-incremental evaluation makes every grid point a prefix of the same
//! quadratic sum, so the grid rows are exactly consistent with each other.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::group::GroupPresentation;
use crate::potential::GreenCache;
use crate::stats::fit_loglog;
use crate::walk::simulate;

use super::{
    ensure_increasing, ensure_seed_count, grid_stat, top_half_window, ExperimentReport,
    FitReport, SampleRow, REPORT_SCHEMA,
};

const WALK_STREAM: u64 = 0;

/// T_n at each grid point for one path per seed, with a log-log fit of the
/// mean over the top half of the grid.
pub fn pair_green_sum_check(
    group: &Arc<GroupPresentation>,
    n_grid: &[usize],
    seeds: &[u64],
    cache: &GreenCache,
) -> Result<ExperimentReport> {
    ensure_increasing(n_grid, "n-grid")?;
    ensure_seed_count(seeds, 1)?;
    let n_max = *n_grid.last().unwrap();

    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let path = simulate(group, n_max, seed, WALK_STREAM);
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            let mut total = 0.0;
            for l in 0..=n_max {
                // Column l adds its diagonal term and both (k, l), (l, k)
                // cross terms; G is symmetric under inversion.
                let mut column = cache.value_at_origin();
                for k in 0..l {
                    column += 2.0
                        * cache.value_between(group, &path.positions[k], &path.positions[l]);
                }
                total += column;
                if next < n_grid.len() && n_grid[next] == l {
                    out.push(total);
                    next += 1;
                }
            }
            out
        })
        .collect();

    let mut samples = Vec::new();
    let mut per_point = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let values: Vec<f64> = per_seed.iter().map(|row| row[i]).collect();
        for (&seed, &value) in seeds.iter().zip(&values) {
            samples.push(SampleRow { x: n, seed, statistic: "pair_green_sum".into(), value });
        }
        per_point.push(grid_stat(n, &values));
    }

    let window = top_half_window(n_grid);
    let fit = if window.len() >= 2 {
        let offset = n_grid.len() - window.len();
        let xs: Vec<f64> = window.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = per_point[offset..].iter().map(|s| s.mean).collect();
        let f = fit_loglog(&xs, &ys);
        Some(FitReport {
            slope: f.slope,
            std_error: f.slope_stderr,
            intercept: f.intercept,
            x_axis: "ln n".into(),
            y_axis: "ln mean(pair_green_sum)".into(),
            window: window.to_vec(),
        })
    } else {
        None
    };

    let mut extra = BTreeMap::new();
    extra.insert("green_horizon".into(), cache.horizon() as f64);

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: "pair-green-sum".into(),
        group: group.spec().clone(),
        grid_label: "n".into(),
        grid: n_grid.to_vec(),
        seeds: seeds.to_vec(),
        estimator: None,
        per_point,
        fit,
        normality: None,
        extra,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, GroupSpec, DEFAULT_MEMORY_CAP};
    use crate::potential::GreenParams;

    fn setup(dim: usize, horizon: usize) -> (Arc<GroupPresentation>, GreenCache) {
        let group = Arc::new(make_group(&GroupSpec::lattice(dim)).unwrap());
        let cache = GreenCache::build(
            &group,
            horizon,
            &GreenParams { eps: 1e-12, memory_cap: DEFAULT_MEMORY_CAP },
        )
        .unwrap();
        (group, cache)
    }

    #[test]
    fn first_row_is_the_origin_value() {
        let (group, cache) = setup(2, 16);
        let report = pair_green_sum_check(&group, &[0, 2, 4], &[9, 10], &cache).unwrap();
        assert_eq!(report.per_point[0].mean, cache.value_at_origin());
        assert_eq!(report.per_point[0].variance, 0.0);
    }

    #[test]
    fn incremental_sum_matches_the_double_loop() {
        let (group, cache) = setup(3, 32);
        let grid = [1usize, 3, 6];
        let seeds = [4u64];
        let report = pair_green_sum_check(&group, &grid, &seeds, &cache).unwrap();

        let path = simulate(&group, 6, 4, WALK_STREAM);
        for (i, &n) in grid.iter().enumerate() {
            let mut direct = 0.0;
            for j in 0..=n {
                for k in 0..=n {
                    direct +=
                        cache.value_between(&group, &path.positions[j], &path.positions[k]);
                }
            }
            let got = report.per_point[i].mean;
            assert!((got - direct).abs() < 1e-12, "n={n}: {got} vs {direct}");
        }
    }

    #[test]
    fn transient_pair_sum_grows_superlinearly() {
        let (group, cache) = setup(3, 256);
        let report =
            pair_green_sum_check(&group, &[16, 32, 64, 128], &[1, 2, 3, 4, 5, 6], &cache)
                .unwrap();
        let fit = report.fit.as_ref().unwrap();
        assert_eq!(fit.window, vec![64, 128]);
        assert!(
            (1.1..=1.8).contains(&fit.slope),
            "pair-sum growth exponent {}",
            fit.slope
        );
        assert_eq!(report.extra["green_horizon"], 256.0);
    }

    #[test]
    fn report_is_deterministic() {
        let (group, cache) = setup(2, 32);
        let a = pair_green_sum_check(&group, &[4, 8, 16], &[1, 2, 3], &cache).unwrap();
        let b = pair_green_sum_check(&group, &[4, 8, 16], &[1, 2, 3], &cache).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(pair_green_sum_check(&group, &[4, 4], &[1], &cache).is_err());
        assert!(pair_green_sum_check(&group, &[4, 8], &[], &cache).is_err());
    }
}
