//! Subcommand execution: load the group, run the computation, evaluate
//! assertion thresholds, and persist the payload with its manifest.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::SystemTime;

use clap::ValueEnum;
use serde_json::{json, Value};

use rangecap::error::Error;
use rangecap::experiments::{
    clt_experiment, dyadic_sandwich_experiment, exit_tail_check, exponent_fit, kernel_decay_check,
    slln_experiment, ExperimentReport, SampleRow,
};
use rangecap::group::{
    decode_element, growth_profile, make_group, parse_group_spec, GroupElement, GroupPresentation,
    DEFAULT_MEMORY_CAP,
};
use rangecap::potential::{
    capacity_bracket, capacity_mc, equilibrium_measure, green_truncated, jain_orey_capacity,
    CapacityEstimate, EscapeConfig, GreenCache, GreenParams,
};
use rangecap::walk::{range_of, return_probability_series, simulate};
use rangecap::Result;

use crate::args::{CapacityMethodArg, Cli, Command, CommonArgs};
use crate::output::{write_outputs, Payload, RunInfo};

/// Everything a successful computation hands to the output layer.
pub struct RunOutput {
    pub payload: Payload,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub failures: Vec<String>,
}

/// Runs one parsed invocation to completion and returns the process exit
/// code: 0 success, 2 validation, 3 resource cap, 4 missed assertion.
pub fn run(cli: Cli) -> i32 {
    let started = SystemTime::now();
    let common = cli.command.common().clone();
    let threads = match common.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        Some(t) => t,
        None => std::thread::available_parallelism().map(usize::from).unwrap_or(1),
    };

    // All parallelism lives under this pool, so --threads bounds the whole
    // computation; payload bytes do not depend on the pool size.
    let outcome = if common.threads.is_some() {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => {
                eprintln!("error: cannot build the worker pool: {e}");
                return 3;
            }
        }
    } else {
        execute(&cli.command)
    };

    let output = match outcome {
        Ok(output) => output,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };

    let info = RunInfo {
        subcommand: cli.command.name(),
        config: output.config,
        seeds: output.seeds,
        threads,
        started,
        finished: SystemTime::now(),
    };
    if let Err(e) = write_outputs(&common, &output.payload, &info) {
        eprintln!("error: cannot write outputs: {e}");
        return 3;
    }
    if common.assert && !output.failures.is_empty() {
        for failure in &output.failures {
            eprintln!("assertion failed: {failure}");
        }
        return 4;
    }
    0
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BallTooLarge { .. } | Error::NonConvergence { .. } => 3,
        _ => 2,
    }
}

fn load_group(text: &str) -> Result<Arc<GroupPresentation>> {
    let raw = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text)
            .map_err(|e| Error::InvalidGroupSpec(format!("cannot read {text}: {e}")))?
    };
    Ok(Arc::new(make_group(&parse_group_spec(&raw)?)?))
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} entry '{t}'")))
        })
        .collect()
}

fn parse_u32_list(text: &str, what: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} entry '{t}'")))
        })
        .collect()
}

/// Seed sets come as a count ("20" = seeds 0..20), a half-open range
/// ("5..9"), or an explicit comma list.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let t = text.trim();
    let bad = |t: &str| Error::InvalidParameter(format!("bad seed entry '{t}'"));
    if let Some((a, b)) = t.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad(a))?;
        let hi: u64 = b.trim().parse().map_err(|_| bad(b))?;
        if lo >= hi {
            return Err(Error::InvalidParameter(format!("empty seed range '{t}'")));
        }
        return Ok((lo..hi).collect());
    }
    if t.contains(',') {
        return t.split(',').map(|s| s.trim().parse::<u64>().map_err(|_| bad(s))).collect();
    }
    let count: u64 = t.parse().map_err(|_| bad(t))?;
    if count == 0 {
        return Err(Error::InvalidParameter("seed count must be positive".into()));
    }
    Ok((0..count).collect())
}

fn experiment_payload(report: &ExperimentReport) -> Payload {
    Payload::new(report, &report.grid_label, report.samples.clone())
}

fn execute(command: &Command) -> Result<RunOutput> {
    match command {
        Command::Walk { common, n, seed, stream } => {
            let group = load_group(&common.group)?;
            let path = simulate(&group, *n, *seed, *stream);
            let mut seen: HashSet<GroupElement> = HashSet::new();
            let mut identity_visits = 0usize;
            let mut rows = Vec::new();
            let mut next_mark = 1usize;
            for (k, pos) in path.positions.iter().enumerate() {
                seen.insert(pos.clone());
                if group.is_identity(pos) {
                    identity_visits += 1;
                }
                if k == 0 || k == next_mark || k == *n {
                    rows.push(SampleRow {
                        x: k,
                        seed: *seed,
                        statistic: "range_size".into(),
                        value: seen.len() as f64,
                    });
                }
                if k == next_mark {
                    next_mark *= 2;
                }
            }
            let report = json!({
                "schema": 1,
                "experiment": "walk",
                "group": group.spec(),
                "n": n,
                "seed": seed,
                "stream": stream,
                "endpoint": path.positions[*n].encode(),
                "range_size": seen.len(),
                "identity_visits": identity_visits,
            });
            Ok(RunOutput {
                payload: Payload::new(&report, "n", rows),
                config: config_with(common, &group, json!({ "n": n, "seed": seed, "stream": stream })),
                seeds: vec![*seed],
                failures: vec![],
            })
        }

        Command::Growth { common, rmax } => {
            let group = load_group(&common.group)?;
            let profile = growth_profile(&group, *rmax, DEFAULT_MEMORY_CAP)?;
            let rows = profile
                .radii
                .iter()
                .zip(&profile.ball_sizes)
                .map(|(&r, &v)| SampleRow {
                    x: r as usize,
                    seed: 0,
                    statistic: "ball_size".into(),
                    value: v as f64,
                })
                .collect();
            let mut failures = Vec::new();
            match group.nominal_growth_index() {
                Some(d) => {
                    if profile.superpolynomial {
                        failures.push(format!(
                            "superpolynomial flag raised for a group of growth index {d}"
                        ));
                    } else if (profile.fitted_index - d).abs() > 0.5 {
                        failures.push(format!(
                            "fitted growth index {} is more than 0.5 away from {d}",
                            profile.fitted_index
                        ));
                    }
                }
                None => {
                    if !profile.superpolynomial {
                        failures.push("superpolynomial growth was not flagged".into());
                    }
                }
            }
            let report = json!({
                "schema": 1,
                "experiment": "growth",
                "group": group.spec(),
                "rmax": rmax,
                "profile": profile,
            });
            Ok(RunOutput {
                payload: Payload::new(&report, "r", rows),
                config: config_with(common, &group, json!({ "rmax": rmax })),
                seeds: vec![],
                failures,
            })
        }

        Command::Kernel { common, n } => {
            let group = load_group(&common.group)?;
            let series = return_probability_series(&group, *n, DEFAULT_MEMORY_CAP)?;
            let rows = series
                .iter()
                .enumerate()
                .map(|(k, &p)| SampleRow { x: k, seed: 0, statistic: "p_k".into(), value: p })
                .collect();
            let report = json!({
                "schema": 1,
                "experiment": "kernel",
                "group": group.spec(),
                "horizon": n,
                "origin_series": series,
            });
            Ok(RunOutput {
                payload: Payload::new(&report, "k", rows),
                config: config_with(common, &group, json!({ "n": n })),
                seeds: vec![],
                failures: vec![],
            })
        }

        Command::Green { common, horizon, element, eps } => {
            let group = load_group(&common.group)?;
            let g = match element {
                Some(text) => decode_element(&group, text)?,
                None => group.identity(),
            };
            let params = GreenParams { eps: *eps, memory_cap: DEFAULT_MEMORY_CAP };
            let estimate = green_truncated(&group, &g, *horizon, &params)?;
            let mut rows = vec![SampleRow {
                x: estimate.horizon,
                seed: 0,
                statistic: "green_value".into(),
                value: estimate.value,
            }];
            if let (Some(v), Some(h)) = (estimate.secondary_value, estimate.secondary_horizon) {
                rows.push(SampleRow { x: h, seed: 0, statistic: "green_value".into(), value: v });
            }
            let report = json!({
                "schema": 1,
                "experiment": "green",
                "group": group.spec(),
                "estimate": estimate,
            });
            Ok(RunOutput {
                payload: Payload::new(&report, "horizon", rows),
                config: config_with(
                    common,
                    &group,
                    json!({ "horizon": horizon, "element": element, "eps": eps }),
                ),
                seeds: vec![],
                failures: vec![],
            })
        }

        Command::Capacity {
            common,
            n,
            seed,
            stream,
            horizon,
            trials,
            method,
            element,
            radius,
            green_horizon,
            fw_iters,
            green_eps,
        } => {
            let group = load_group(&common.group)?;
            let path = n.map(|n| simulate(&group, n, *seed, *stream));
            let elements: Vec<GroupElement> = match (&path, element.is_empty()) {
                (Some(p), true) => range_of(p, 0, p.len())?.elements().to_vec(),
                (None, false) => {
                    let mut v = element
                        .iter()
                        .map(|t| decode_element(&group, t))
                        .collect::<Result<Vec<_>>>()?;
                    v.sort_unstable();
                    v.dedup();
                    v
                }
                _ => {
                    return Err(Error::InvalidParameter(
                        "pass --n for a range or --element for an explicit set".into(),
                    ))
                }
            };
            let escape_horizon = || -> Result<usize> {
                horizon.or_else(|| n.map(|n| 16 * n.max(1))).ok_or_else(|| {
                    Error::InvalidParameter("--horizon is required for explicit sets".into())
                })
            };
            let estimate: CapacityEstimate = match method {
                CapacityMethodArg::EscapeMc => {
                    let cfg = EscapeConfig::new(escape_horizon()?, *trials, *seed);
                    capacity_mc(&group, &elements, &cfg)
                }
                CapacityMethodArg::JainOrey => {
                    let p = path.as_ref().ok_or_else(|| {
                        Error::InvalidParameter("the first-visit estimator needs --n".into())
                    })?;
                    let cfg = EscapeConfig::new(escape_horizon()?, *trials, *seed);
                    jain_orey_capacity(&group, p, &cfg)
                }
                CapacityMethodArg::Variational => {
                    let h = green_horizon.ok_or_else(|| {
                        Error::InvalidParameter(
                            "--green-horizon is required for the variational method".into(),
                        )
                    })?;
                    let params = GreenParams { eps: *green_eps, memory_cap: DEFAULT_MEMORY_CAP };
                    let cache = GreenCache::build(&group, h, &params)?;
                    equilibrium_measure(&group, &cache, &elements, *fw_iters, 1e-12)?.1
                }
                CapacityMethodArg::Bracket => {
                    let r = radius.ok_or_else(|| {
                        Error::InvalidParameter("--radius is required for the bracket method".into())
                    })?;
                    capacity_bracket(&group, &elements, r)?
                }
            };
            let x = n.unwrap_or(elements.len());
            let mut rows = vec![SampleRow {
                x,
                seed: *seed,
                statistic: "capacity".into(),
                value: estimate.point,
            }];
            if let Some(se) = estimate.std_error {
                rows.push(SampleRow { x, seed: *seed, statistic: "std_error".into(), value: se });
            }
            if let Some([lo, hi]) = estimate.bracket {
                rows.push(SampleRow { x, seed: *seed, statistic: "bracket_lower".into(), value: lo });
                rows.push(SampleRow { x, seed: *seed, statistic: "bracket_upper".into(), value: hi });
            }
            let config = config_with(
                common,
                &group,
                json!({
                    "n": n,
                    "seed": seed,
                    "stream": stream,
                    "horizon": horizon,
                    "trials": trials,
                    "method": method.to_possible_value().unwrap().get_name(),
                    "element": element,
                    "radius": radius,
                    "green_horizon": green_horizon,
                    "fw_iters": fw_iters,
                    "green_eps": green_eps,
                }),
            );
            Ok(RunOutput {
                payload: Payload::new(&estimate, "n", rows),
                config,
                seeds: vec![*seed],
                failures: vec![],
            })
        }

        Command::Slln { common, grid, seeds, estimator } => {
            let group = load_group(&common.group)?;
            let grid = parse_usize_list(grid, "grid")?;
            let seeds = parse_seeds(seeds)?;
            let cfg = estimator.to_config();
            let report = slln_experiment(&group, &grid, &seeds, &cfg)?;
            let failures = slln_failures(&group, &report);
            let config = config_with(
                common,
                &group,
                json!({ "grid": grid, "seeds": seeds, "estimator": cfg }),
            );
            Ok(RunOutput { payload: experiment_payload(&report), config, seeds, failures })
        }

        Command::Clt { common, n, reps, seed, estimator } => {
            let group = load_group(&common.group)?;
            let cfg = estimator.to_config();
            let report = clt_experiment(&group, *n, *reps, *seed, &cfg)?;
            let failures = match &report.normality {
                Some(nr) if nr.ks_distance < 0.10 => vec![],
                Some(nr) => vec![format!("KS distance {} is not below 0.10", nr.ks_distance)],
                None => vec!["sample was degenerate; no normality statistics".into()],
            };
            let config = config_with(
                common,
                &group,
                json!({ "n": n, "reps": reps, "seed": seed, "estimator": cfg }),
            );
            Ok(RunOutput {
                payload: experiment_payload(&report),
                config,
                seeds: vec![*seed],
                failures,
            })
        }

        Command::Fit { common, grid, seeds, estimator } => {
            let group = load_group(&common.group)?;
            let grid = parse_usize_list(grid, "grid")?;
            let seeds = parse_seeds(seeds)?;
            let cfg = estimator.to_config();
            let report = exponent_fit(&group, &grid, &seeds, &cfg)?;
            let slope = report.fit.as_ref().expect("exponent fit always present").slope;
            let bracket = group.nominal_growth_index().and_then(|d| {
                if d == 3.0 {
                    Some((0.40, 0.60))
                } else if d == 4.0 {
                    Some((0.80, 1.00))
                } else if d >= 5.0 {
                    Some((0.90, 1.05))
                } else {
                    None
                }
            });
            let failures = match bracket {
                Some((lo, hi)) if slope < lo || slope > hi => {
                    vec![format!("fitted exponent {slope} is outside [{lo}, {hi}]")]
                }
                _ => vec![],
            };
            let config = config_with(
                common,
                &group,
                json!({ "grid": grid, "seeds": seeds, "estimator": cfg }),
            );
            Ok(RunOutput { payload: experiment_payload(&report), config, seeds, failures })
        }

        Command::Sandwich { common, n, levels, seeds, green_horizon, estimator } => {
            let group = load_group(&common.group)?;
            let levels = parse_u32_list(levels, "levels")?;
            let seeds = parse_seeds(seeds)?;
            let cfg = estimator.to_config();
            let cache_horizon = green_horizon.unwrap_or(*n);
            let params = GreenParams { eps: cfg.green_eps, memory_cap: DEFAULT_MEMORY_CAP };
            let cache = GreenCache::build(&group, cache_horizon, &params)?;
            let report = dyadic_sandwich_experiment(&group, *n, &levels, &seeds, &cfg, &cache)?;
            let mut failures = Vec::new();
            for key in ["upper_violations_exact", "upper_violations_3sigma", "monotone_violations"]
            {
                if report.extra[key] > 0.0 {
                    failures.push(format!("{key} = {}", report.extra[key]));
                }
            }
            let config = config_with(
                common,
                &group,
                json!({
                    "n": n,
                    "levels": levels,
                    "seeds": seeds,
                    "green_horizon": cache_horizon,
                    "estimator": cfg,
                }),
            );
            Ok(RunOutput { payload: experiment_payload(&report), config, seeds, failures })
        }

        Command::Decay { common, grid } => {
            let group = load_group(&common.group)?;
            let grid = parse_usize_list(grid, "grid")?;
            let report = kernel_decay_check(&group, &grid)?;
            let slope = report.fit.as_ref().expect("decay fit always present").slope;
            let failures = match report.extra.get("reference_slope") {
                Some(reference) if (slope - reference).abs() > 0.3 => {
                    vec![format!("decay slope {slope} is more than 0.3 from {reference}")]
                }
                Some(_) => vec![],
                None => match report.extra.get("superpolynomial") {
                    Some(&flag) if flag == 1.0 => vec![],
                    Some(_) => vec!["superpolynomial decay was not flagged".into()],
                    None => vec!["grid too short to evaluate the superpolynomial flag".into()],
                },
            };
            let config = config_with(common, &group, json!({ "grid": grid }));
            Ok(RunOutput { payload: experiment_payload(&report), config, seeds: vec![], failures })
        }

        Command::ExitTail { common, rgrid, n, trials, seed } => {
            let group = load_group(&common.group)?;
            let rgrid = parse_u32_list(rgrid, "rgrid")?;
            let report = exit_tail_check(&group, &rgrid, *n, *trials, *seed)?;
            let failures = match report.extra.get("slope_r2_over_n") {
                Some(&s) if s < 0.0 => vec![],
                Some(&s) => vec![format!("exit-tail slope {s} is not negative")],
                None => vec!["no decreasing window to fit an exit-tail slope".into()],
            };
            let config = config_with(
                common,
                &group,
                json!({ "rgrid": rgrid, "n": n, "trials": trials, "seed": seed }),
            );
            Ok(RunOutput {
                payload: experiment_payload(&report),
                config,
                seeds: vec![*seed],
                failures,
            })
        }
    }
}

/// SLLN thresholds keyed by the nominal growth index: positive flat trend
/// above the critical index, strict decrease at it, noise floor below it.
fn slln_failures(group: &GroupPresentation, report: &ExperimentReport) -> Vec<String> {
    let mut failures = Vec::new();
    let mu_hat = report.extra["mu_hat"];
    match group.nominal_growth_index() {
        Some(d) if d >= 5.0 => {
            if mu_hat <= 0.0 {
                failures.push(format!("mu_hat {mu_hat} is not positive"));
            }
            let change = report.extra["top_step_rel_change"];
            if change >= 0.15 {
                failures.push(format!("top-octave relative change {change} is not below 0.15"));
            }
        }
        Some(d) if d == 4.0 => {
            for pair in report.per_point.windows(2) {
                if pair[1].mean >= pair[0].mean {
                    failures.push(format!(
                        "mean C_n/n did not decrease from n={} to n={}",
                        pair[0].x, pair[1].x
                    ));
                }
            }
        }
        Some(d) if d <= 2.0 => {
            if mu_hat >= 1e-3 {
                failures.push(format!("mu_hat {mu_hat} is not below 1e-3"));
            }
        }
        _ => {}
    }
    failures
}

fn config_with(common: &CommonArgs, group: &GroupPresentation, extra: Value) -> Value {
    let mut config = json!({
        "group": group.spec(),
        "format": common.format.name(),
        "assert": common.assert,
    });
    if let (Value::Object(base), Value::Object(more)) = (&mut config, extra) {
        base.extend(more);
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs_expand_correctly() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5..8").unwrap(), vec![5, 6, 7]);
        assert_eq!(parse_seeds("9,4,4").unwrap(), vec![9, 4, 4]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("8..8").is_err());
        assert!(parse_seeds("a,b").is_err());
    }

    #[test]
    fn grid_parsing_validates_entries() {
        assert_eq!(parse_usize_list("4, 8,16", "grid").unwrap(), vec![4, 8, 16]);
        assert!(parse_usize_list("4,x", "grid").is_err());
        assert_eq!(parse_u32_list("1,2", "levels").unwrap(), vec![1, 2]);
    }

    #[test]
    fn exit_codes_split_validation_from_resource_caps() {
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidGroupSpec("x".into())), 2);
        assert_eq!(exit_code(&Error::BallTooLarge { cap: 1, radius_reached: 0 }), 3);
        assert_eq!(exit_code(&Error::NonConvergence { sweeps: 1, residual: 1.0 }), 3);
    }

    #[test]
    fn inline_group_specs_load_without_files() {
        let group = load_group(r#"{"backend": "lattice", "dim": 2}"#);
        assert!(group.is_ok());
        assert!(load_group("/no/such/file.json").is_err());
        assert!(load_group("{not json").is_err());
    }
}
