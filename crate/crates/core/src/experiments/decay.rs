//! Return-probability decay and exit-time tail experiments.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::{GroupPresentation, WordMetric, DEFAULT_MEMORY_CAP};
use crate::stats::{fit_linear, fit_loglog};
use crate::walk::{return_probability_series, simulate};

use super::{
    ensure_increasing, grid_stat, growth_index, ExperimentReport, FitReport, SampleRow,
    REPORT_SCHEMA,
};

/// Polynomial decay looks the same on every octave; superpolynomial decay
/// steepens. The flag fires when the upper-half slope is materially steeper
/// than the lower-half slope, or simply beyond any tested power.
const SUPERPOL_RATIO: f64 = 1.25;
const SUPERPOL_MARGIN: f64 = 0.1;
const SUPERPOL_HARD: f64 = 8.0;

/// Exact p_{2n}(e) over the grid with a fitted log-log slope.
///
/// The full-grid slope is the headline number; two half-window slopes drive
/// the superpolynomial flag. Lattices also record -d/2 as the reference.
pub fn kernel_decay_check(
    group: &Arc<GroupPresentation>,
    n_grid: &[usize],
) -> Result<ExperimentReport> {
    ensure_increasing(n_grid, "n-grid")?;
    if n_grid[0] < 1 {
        return Err(Error::InvalidParameter("kernel decay grid needs n >= 1".into()));
    }
    if n_grid.len() < 2 {
        return Err(Error::InvalidParameter("kernel decay grid needs two points".into()));
    }
    let horizon = 2 * n_grid.last().unwrap();
    let series = return_probability_series(group, horizon, DEFAULT_MEMORY_CAP)?;

    let mut samples = Vec::new();
    let mut per_point = Vec::new();
    for &n in n_grid {
        let p = series[2 * n];
        samples.push(SampleRow { x: n, seed: 0, statistic: "p2n".into(), value: p });
        per_point.push(grid_stat(n, &[p]));
    }

    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = per_point.iter().map(|s| s.mean).collect();
    let fit = fit_loglog(&xs, &ys);

    let mut extra = BTreeMap::new();
    if let Some(d) = growth_index(group) {
        extra.insert("reference_slope".into(), -(d as f64) / 2.0);
    }
    let half = n_grid.len() / 2;
    if half >= 2 {
        let lo = fit_loglog(&xs[..half], &ys[..half]).slope;
        let hi = fit_loglog(&xs[half..], &ys[half..]).slope;
        extra.insert("slope_lower_window".into(), lo);
        extra.insert("slope_upper_window".into(), hi);
        let superpol = hi.abs() > SUPERPOL_RATIO * lo.abs() + SUPERPOL_MARGIN
            || hi.abs() > SUPERPOL_HARD;
        extra.insert("superpolynomial".into(), f64::from(u8::from(superpol)));
    }

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: "kernel-decay".into(),
        group: group.spec().clone(),
        grid_label: "n".into(),
        grid: n_grid.to_vec(),
        seeds: vec![],
        estimator: None,
        per_point,
        fit: Some(FitReport {
            slope: fit.slope,
            std_error: fit.slope_stderr,
            intercept: fit.intercept,
            x_axis: "ln n".into(),
            y_axis: "ln p_2n(e)".into(),
            window: n_grid.to_vec(),
        }),
        normality: None,
        extra,
        samples,
    })
}

/// Empirical P(tau_r < n) over an r-grid, with log-frequency fitted against
/// r^2/n. One pass per path records the running word-length maximum, so
/// every r reads the same trials.
///
/// Word lengths outside a BFS table radius (only possible for table-backed
/// metrics) count as exceeding every grid radius.
pub fn exit_tail_check(
    group: &Arc<GroupPresentation>,
    r_grid: &[u32],
    n: usize,
    trials: u32,
    seed: u64,
) -> Result<ExperimentReport> {
    let grid: Vec<usize> = r_grid.iter().map(|&r| r as usize).collect();
    ensure_increasing(&grid, "r-grid")?;
    if r_grid[0] == 0 {
        return Err(Error::InvalidParameter("exit radii start at 1".into()));
    }
    if n == 0 || trials == 0 {
        return Err(Error::InvalidParameter("exit tail needs n >= 1 and trials >= 1".into()));
    }
    let r_max = *r_grid.last().unwrap();
    let metric = WordMetric::for_group(group, r_max, DEFAULT_MEMORY_CAP)?;

    // Peak word length over positions S_0..S_{n-1}; tau_r < n iff peak >= r.
    let peaks: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let path = simulate(group, n, seed, t as u64);
            path.positions[..n]
                .iter()
                .map(|p| metric.distance(p).map_or(u64::from(r_max) + 1, u64::from))
                .max()
                .unwrap()
        })
        .collect();

    let mut samples = Vec::new();
    let mut per_point = Vec::new();
    for &r in r_grid {
        let hits: Vec<f64> = peaks
            .iter()
            .map(|&peak| f64::from(u8::from(peak >= u64::from(r))))
            .collect();
        let stat = grid_stat(r as usize, &hits);
        samples.push(SampleRow {
            x: r as usize,
            seed,
            statistic: "exit_freq".into(),
            value: stat.mean,
        });
        per_point.push(stat);
    }

    // Log-frequency against r^2/n on radii that were reached at all.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = Vec::new();
    for stat in &per_point {
        if stat.mean > 0.0 {
            xs.push((stat.x * stat.x) as f64 / n as f64);
            ys.push(stat.mean.ln());
            window.push(stat.x);
        }
    }
    let fit = if xs.len() >= 2 && xs.first() != xs.last() {
        let f = fit_linear(&xs, &ys);
        Some(FitReport {
            slope: f.slope,
            std_error: f.slope_stderr,
            intercept: f.intercept,
            x_axis: "r^2/n".into(),
            y_axis: "ln P(tau_r < n)".into(),
            window,
        })
    } else {
        None
    };

    let mut extra = BTreeMap::new();
    extra.insert("trials".into(), f64::from(trials));
    extra.insert("n".into(), n as f64);
    if let Some(f) = &fit {
        extra.insert("slope_r2_over_n".into(), f.slope);
    }

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: "exit-tail".into(),
        group: group.spec().clone(),
        grid_label: "r".into(),
        grid,
        seeds: vec![seed],
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
    use crate::group::{make_group, GroupSpec};
    use crate::walk::exact_kernel;

    fn arc(spec: GroupSpec) -> Arc<GroupPresentation> {
        Arc::new(make_group(&spec).unwrap())
    }

    #[test]
    fn lattice_slopes_sit_near_minus_half_d() {
        let d2 = kernel_decay_check(&arc(GroupSpec::lattice(2)), &[4, 8, 16, 32, 64]).unwrap();
        let s2 = d2.fit.as_ref().unwrap().slope;
        assert!((-1.3..=-0.8).contains(&s2), "d=2 slope {s2}");
        assert_eq!(d2.extra["superpolynomial"], 0.0);
        assert_eq!(d2.extra["reference_slope"], -1.0);

        let d3 = kernel_decay_check(&arc(GroupSpec::lattice(3)), &[4, 8, 16, 32]).unwrap();
        let s3 = d3.fit.as_ref().unwrap().slope;
        assert!((-1.8..=-1.2).contains(&s3), "d=3 slope {s3}");
        assert_eq!(d3.extra["superpolynomial"], 0.0);
    }

    #[test]
    fn tree_decay_raises_the_superpolynomial_flag() {
        let report =
            kernel_decay_check(&arc(GroupSpec::free_product_z2(3)), &[4, 8, 16, 32]).unwrap();
        assert_eq!(report.extra["superpolynomial"], 1.0);
        assert!(
            report.extra["slope_upper_window"] < report.extra["slope_lower_window"],
            "steepening expected"
        );
        assert!(!report.extra.contains_key("reference_slope"));
    }

    #[test]
    fn dihedral_free_product_decays_like_a_line() {
        // Two involutions give linear growth; the radial chain is a folded
        // simple walk, so p_2n(e) ~ n^{-1/2} and no flag fires.
        let report =
            kernel_decay_check(&arc(GroupSpec::free_product_z2(2)), &[8, 16, 32, 64]).unwrap();
        let slope = report.fit.as_ref().unwrap().slope;
        assert!((-0.7..=-0.3).contains(&slope), "slope {slope}");
        assert_eq!(report.extra["superpolynomial"], 0.0);
    }

    #[test]
    fn radial_series_matches_the_generic_kernel() {
        for arity in [2usize, 3] {
            let g = arc(GroupSpec::free_product_z2(arity));
            let fast = return_probability_series(&g, 12, DEFAULT_MEMORY_CAP).unwrap();
            let table = exact_kernel(&g, 12, 0.0, DEFAULT_MEMORY_CAP).unwrap();
            let slow = table.origin_series(&g);
            for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
                assert!((a - b).abs() < 1e-12, "arity {arity} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn exit_tail_trivial_radii() {
        let g = arc(GroupSpec::lattice(3));
        let report = exit_tail_check(&g, &[1, 3, 5, 50], 40, 300, 7).unwrap();
        // The first step always reaches word length 1, and length <= k
        // caps the peak at n-1 < 50.
        assert_eq!(report.per_point[0].mean, 1.0);
        assert_eq!(report.per_point.last().unwrap().mean, 0.0);
        // Thresholding one shared peak makes frequencies monotone exactly.
        for pair in report.per_point.windows(2) {
            assert!(pair[1].mean <= pair[0].mean);
        }
        let slope = report.extra["slope_r2_over_n"];
        assert!(slope < 0.0, "slope {slope}");
    }

    #[test]
    fn exit_tail_runs_on_a_bfs_metric_table() {
        let g = arc(GroupSpec::heisenberg());
        let report = exit_tail_check(&g, &[1, 2, 4], 12, 60, 3).unwrap();
        assert_eq!(report.per_point[0].mean, 1.0);
        for pair in report.per_point.windows(2) {
            assert!(pair[1].mean <= pair[0].mean);
        }
    }

    #[test]
    fn exit_tail_is_deterministic() {
        let g = arc(GroupSpec::lattice(2));
        let a = exit_tail_check(&g, &[2, 4], 30, 100, 11).unwrap();
        let b = exit_tail_check(&g, &[2, 4], 30, 100, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(exit_tail_check(&g, &[0, 2], 30, 10, 1).is_err());
        assert!(exit_tail_check(&g, &[2, 4], 0, 10, 1).is_err());
    }
}
