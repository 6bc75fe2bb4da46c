//! Sandwich bounds from splitting a walk into dyadic windows.
//!
//! For nested boundaries the two-set decomposition telescopes: the range
//! capacity is at most the sum of leaf-window capacities, and at least that
//! sum minus twice the cross-Green error of every merged block pair along
//! the way down. All capacities of one sample share a single escape
//! configuration with point-keyed streams, and windows stay in ambient
//! coordinates, so a trial that returns to a window also returns to every
//! superset; the upper inequality then holds per sample exactly, as does
//! monotonicity of the leaf sum in the level.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::GroupPresentation;
use crate::potential::{capacity_mc, cross_green, EscapeConfig, GreenCache, StreamPolicy};
use crate::rng::derive;
use crate::walk::{dyadic_boundaries, range_of, simulate};

use super::{
    ensure_increasing, ensure_seed_count, grid_stat, EstimatorConfig, EstimatorMethod,
    ExperimentReport, SampleRow, CAP_EST_TAG, REPORT_SCHEMA,
};

const WALK_STREAM: u64 = 0;
const EXACT_SLACK: f64 = 1e-9;

struct LevelRow {
    leaf_sum: f64,
    error_sum: f64,
    upper_margin: f64,
    lower_margin: f64,
    combined_se: f64,
}

struct SeedRun {
    cap_n: f64,
    rows: Vec<LevelRow>,
}

fn run_seed(
    group: &Arc<GroupPresentation>,
    n: usize,
    levels: &[u32],
    seed: u64,
    cfg: &EstimatorConfig,
    cache: &GreenCache,
) -> Result<SeedRun> {
    let path = simulate(group, n, seed, WALK_STREAM);
    let esc = EscapeConfig::new(cfg.horizon_factor * n, cfg.trials, derive(seed, CAP_EST_TAG))
        .with_policy(StreamPolicy::ByPoint);

    let full = range_of(&path, 0, n)?;
    let cap = capacity_mc(group, full.elements(), &esc);
    let cap_n = cap.point;
    let cap_var = cap.std_error.unwrap_or(0.0).powi(2);

    // Cross-Green of the block pair merged at each refinement level; the
    // lower bound for L spends the levels 1..=L of this ladder.
    let max_level = *levels.last().unwrap();
    let mut merge_error = vec![0.0f64; max_level as usize + 1];
    for l in 1..=max_level {
        let b = dyadic_boundaries(n, l)?;
        for i in (0..b.len() - 1).step_by(2) {
            let left = range_of(&path, b[i], b[i + 1])?;
            let right = range_of(&path, b[i + 1], b[i + 2])?;
            merge_error[l as usize] +=
                cross_green(group, cache, left.elements(), right.elements());
        }
    }

    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let b = dyadic_boundaries(n, level)?;
        let mut leaf_sum = 0.0;
        let mut leaf_var = 0.0;
        for w in b.windows(2) {
            let leaf = range_of(&path, w[0], w[1])?;
            let est = capacity_mc(group, leaf.elements(), &esc);
            leaf_sum += est.point;
            leaf_var += est.std_error.unwrap_or(0.0).powi(2);
        }
        let error_sum: f64 = merge_error[1..=level as usize].iter().sum();
        rows.push(LevelRow {
            leaf_sum,
            error_sum,
            upper_margin: leaf_sum - cap_n,
            lower_margin: cap_n - (leaf_sum - 2.0 * error_sum),
            combined_se: (cap_var + leaf_var).sqrt(),
        });
    }
    Ok(SeedRun { cap_n, rows })
}

/// Capacity sandwich across dyadic refinement levels, one coupled sample per
/// seed. Upper margins and leaf-sum monotonicity are exact nonnegative per
/// sample; lower margins are reported with their truncated-Green errors.
pub fn dyadic_sandwich_experiment(
    group: &Arc<GroupPresentation>,
    n: usize,
    levels: &[u32],
    seeds: &[u64],
    cfg: &EstimatorConfig,
    cache: &GreenCache,
) -> Result<ExperimentReport> {
    let grid: Vec<usize> = levels.iter().map(|&l| l as usize).collect();
    ensure_increasing(&grid, "level grid")?;
    ensure_seed_count(seeds, 1)?;
    if cfg.method != EstimatorMethod::EscapeMc {
        return Err(Error::InvalidParameter(
            "the sandwich coupling needs the escape estimator".into(),
        ));
    }
    if cfg.trials == 0 || cfg.horizon_factor == 0 {
        return Err(Error::InvalidParameter("escape trials and horizon must be positive".into()));
    }
    let max_level = *levels.last().unwrap();
    if max_level >= usize::BITS || (1usize << max_level) > n {
        return Err(Error::InvalidParameter(format!(
            "2^{max_level} windows do not fit a length-{n} path"
        )));
    }

    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| run_seed(group, n, levels, seed, cfg, cache))
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut per_point = Vec::new();
    let mut exact_violations = 0u32;
    let mut sigma_violations = 0u32;
    let mut monotone_violations = 0u32;
    for (li, &level) in grid.iter().enumerate() {
        let mut uppers = Vec::with_capacity(seeds.len());
        for (&seed, run) in seeds.iter().zip(&runs) {
            let row = &run.rows[li];
            for (stat, value) in [
                ("upper_margin", row.upper_margin),
                ("lower_margin", row.lower_margin),
                ("leaf_cap_sum", row.leaf_sum),
                ("error_sum", row.error_sum),
                ("combined_se", row.combined_se),
            ] {
                samples.push(SampleRow { x: level, seed, statistic: stat.into(), value });
            }
            uppers.push(row.upper_margin);
            if row.upper_margin < -EXACT_SLACK {
                exact_violations += 1;
            }
            if row.upper_margin < -3.0 * row.combined_se {
                sigma_violations += 1;
            }
            if li > 0 && row.leaf_sum < run.rows[li - 1].leaf_sum - EXACT_SLACK {
                monotone_violations += 1;
            }
        }
        per_point.push(grid_stat(level, &uppers));
    }

    let mut extra = BTreeMap::new();
    extra.insert("cap_mean".into(), runs.iter().map(|r| r.cap_n).sum::<f64>() / runs.len() as f64);
    extra.insert("upper_violations_exact".into(), f64::from(exact_violations));
    extra.insert("upper_violations_3sigma".into(), f64::from(sigma_violations));
    extra.insert("monotone_violations".into(), f64::from(monotone_violations));
    extra.insert("green_horizon".into(), cache.horizon() as f64);

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: "dyadic-sandwich".into(),
        group: group.spec().clone(),
        grid_label: "levels".into(),
        grid,
        seeds: seeds.to_vec(),
        estimator: Some(cfg.clone()),
        per_point,
        fit: None,
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

    fn setup() -> (Arc<GroupPresentation>, GreenCache, EstimatorConfig) {
        let group = Arc::new(make_group(&GroupSpec::lattice(3)).unwrap());
        let cache = GreenCache::build(
            &group,
            64,
            &GreenParams { eps: 1e-9, memory_cap: DEFAULT_MEMORY_CAP },
        )
        .unwrap();
        let cfg = EstimatorConfig { horizon_factor: 2, trials: 4, ..EstimatorConfig::default() };
        (group, cache, cfg)
    }

    #[test]
    fn upper_side_and_leaf_monotonicity_hold_per_sample() {
        let (group, cache, cfg) = setup();
        let seeds = [1u64, 2, 3, 4, 5, 6];
        let report =
            dyadic_sandwich_experiment(&group, 64, &[0, 1, 2], &seeds, &cfg, &cache).unwrap();

        assert_eq!(report.extra["upper_violations_exact"], 0.0);
        assert_eq!(report.extra["upper_violations_3sigma"], 0.0);
        assert_eq!(report.extra["monotone_violations"], 0.0);
        for row in report.samples.iter().filter(|r| r.statistic == "upper_margin") {
            assert!(row.value >= -1e-9, "upper margin {} at L={}", row.value, row.x);
        }
        // One window at L=0 is the whole range under the same trial streams.
        for row in report.samples.iter().filter(|r| r.x == 0) {
            if row.statistic == "upper_margin" || row.statistic == "lower_margin" {
                assert_eq!(row.value, 0.0);
            }
        }
        assert!(report.extra["cap_mean"] > 0.0);
    }

    #[test]
    fn report_is_deterministic() {
        let (group, cache, cfg) = setup();
        let a = dyadic_sandwich_experiment(&group, 32, &[0, 2], &[7, 8], &cfg, &cache).unwrap();
        let b = dyadic_sandwich_experiment(&group, 32, &[0, 2], &[7, 8], &cfg, &cache).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (group, cache, cfg) = setup();
        let variational =
            EstimatorConfig { method: EstimatorMethod::Variational, ..cfg.clone() };
        assert!(
            dyadic_sandwich_experiment(&group, 32, &[0, 1], &[1], &variational, &cache).is_err()
        );
        assert!(dyadic_sandwich_experiment(&group, 8, &[0, 4], &[1], &cfg, &cache).is_err());
        assert!(dyadic_sandwich_experiment(&group, 32, &[0, 1], &[], &cfg, &cache).is_err());
        assert!(dyadic_sandwich_experiment(&group, 32, &[1, 1], &[1], &cfg, &cache).is_err());
    }
}
