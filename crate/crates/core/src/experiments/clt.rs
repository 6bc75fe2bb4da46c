//! Normality probe for C_n at fixed n over independent replications.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::GroupPresentation;
use crate::potential::{GreenCache, GreenParams};
use crate::rng::derive;
use crate::stats::ks_normal;
use crate::walk::{range_of, simulate};

use super::{
    estimate_range_capacity, grid_stat, EstimatorConfig, EstimatorMethod, ExperimentReport,
    NormalityReport, SampleRow, CAP_EST_TAG, REPORT_SCHEMA,
};

/// Samples C_n over `replications` independent paths and tests the
/// standardized sample against the normal law; C_{n/2} is computed on the
/// same paths so the report can compare Var(C_n)/n across the two scales.
///
/// Replication r uses walk stream r of the base seed; the estimator seed is
/// derived from (base seed, r). Standardization uses the sample mean and
/// standard deviation, so the test reads "consistent with some Gaussian",
/// not a fit to predicted constants.
pub fn clt_experiment(
    group: &Arc<GroupPresentation>,
    n: usize,
    replications: u32,
    base_seed: u64,
    cfg: &EstimatorConfig,
) -> Result<ExperimentReport> {
    if replications < 200 {
        return Err(Error::InvalidParameter(format!(
            "clt experiment needs at least 200 replications, got {replications}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("clt experiment needs n >= 2".into()));
    }
    let half = n / 2;
    let grid = [half, n];

    let caches = match cfg.method {
        EstimatorMethod::EscapeMc => [None, None],
        EstimatorMethod::Variational => {
            let params = GreenParams { eps: cfg.green_eps, ..GreenParams::default() };
            [
                Some(GreenCache::build(group, cfg.horizon_factor * half, &params)?),
                Some(GreenCache::build(group, cfg.horizon_factor * n, &params)?),
            ]
        }
    };

    // One path per replication; the half-scale sample reads its prefix.
    let pairs: Vec<[f64; 2]> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let path = simulate(group, n, base_seed, rep as u64);
            let est_seed = derive(base_seed, CAP_EST_TAG ^ rep as u64);
            let mut out = [0.0; 2];
            for (slot, (&m, cache)) in out.iter_mut().zip(grid.iter().zip(&caches)) {
                let range = range_of(&path, 0, m)?;
                *slot = estimate_range_capacity(
                    group,
                    range.elements(),
                    m,
                    cfg,
                    cache.as_ref(),
                    est_seed,
                )?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(pairs.len() * 2);
    let mut per_point = Vec::new();
    let mut extra = BTreeMap::new();
    let mut caps_at_n = Vec::with_capacity(pairs.len());
    for (i, &m) in grid.iter().enumerate() {
        let values: Vec<f64> = pairs.iter().map(|p| p[i]).collect();
        for (rep, &v) in values.iter().enumerate() {
            samples.push(SampleRow { x: m, seed: rep as u64, statistic: "cap".into(), value: v });
        }
        let stat = grid_stat(m, &values);
        extra.insert(format!("var_over_n@{m}"), stat.variance / m as f64);
        per_point.push(stat);
        if m == n {
            caps_at_n = values;
        }
    }
    let vh = extra[&format!("var_over_n@{half}")];
    let vn = extra[&format!("var_over_n@{n}")];
    if vh > 0.0 {
        extra.insert("var_ratio".into(), vn / vh);
    }

    let stat_n = per_point.last().unwrap();
    let sd = stat_n.variance.sqrt();
    let normality = if sd > 0.0 {
        let mut moments = crate::stats::StreamingMoments::new();
        for &v in &caps_at_n {
            moments.push(v);
        }
        Some(NormalityReport {
            sample_count: caps_at_n.len() as u64,
            ks_distance: ks_normal(&caps_at_n, stat_n.mean, sd),
            skewness: moments.skewness(),
            excess_kurtosis: moments.excess_kurtosis(),
        })
    } else {
        None
    };

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: "clt".into(),
        group: group.spec().clone(),
        grid_label: "n".into(),
        grid: grid.to_vec(),
        seeds: vec![base_seed],
        estimator: Some(cfg.clone()),
        per_point,
        fit: None,
        normality,
        extra,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, GroupSpec};

    fn cheap() -> EstimatorConfig {
        EstimatorConfig { horizon_factor: 2, trials: 2, ..EstimatorConfig::default() }
    }

    #[test]
    fn clt_report_structure() {
        let g = Arc::new(make_group(&GroupSpec::lattice(3)).unwrap());
        let report = clt_experiment(&g, 32, 200, 5, &cheap()).unwrap();
        assert_eq!(report.grid, vec![16, 32]);
        assert_eq!(report.samples.len(), 400);
        let norm = report.normality.as_ref().unwrap();
        assert_eq!(norm.sample_count, 200);
        assert!(norm.ks_distance >= 0.0 && norm.ks_distance <= 1.0);
        assert!(report.extra.contains_key("var_ratio"));
        assert!(report.extra["var_over_n@32"] >= 0.0);
    }

    #[test]
    fn clt_is_deterministic() {
        let g = Arc::new(make_group(&GroupSpec::lattice(3)).unwrap());
        let a = clt_experiment(&g, 16, 200, 9, &cheap()).unwrap();
        let b = clt_experiment(&g, 16, 200, 9, &cheap()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn clt_validates_input() {
        let g = Arc::new(make_group(&GroupSpec::lattice(3)).unwrap());
        assert!(clt_experiment(&g, 32, 199, 5, &cheap()).is_err());
        assert!(clt_experiment(&g, 1, 200, 5, &cheap()).is_err());
    }
}
