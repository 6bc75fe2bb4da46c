//! Green energy and the equilibrium measure on the probability simplex.

use super::{cross_green, CapacityEstimate, CapacityMethod, GreenCache};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupPresentation};
use serde::{Deserialize, Serialize};

/// A probability measure supported on a finite element set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexMeasure {
    pub support: Vec<String>,
    pub weights: Vec<f64>,
}

impl SimplexMeasure {
    pub fn is_valid(&self) -> bool {
        self.support.len() == self.weights.len()
            && self.weights.iter().all(|w| *w >= 0.0)
            && (self.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10
    }
}

/// Green energy E(nu) = sum_{i,j} G(a_i^{-1} a_j) nu_i nu_j with truncated
/// Green values, so the result is a lower bound of the true energy.
pub fn energy(
    group: &GroupPresentation,
    cache: &GreenCache,
    support: &[GroupElement],
    weights: &[f64],
) -> f64 {
    assert_eq!(support.len(), weights.len());
    let matrix = green_matrix(group, cache, support);
    quadratic_form(&matrix, weights)
}

fn quadratic_form(matrix: &[Vec<f64>], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, wi) in matrix.iter().zip(weights) {
        let mut acc = 0.0;
        for (mij, wj) in row.iter().zip(weights) {
            acc += mij * wj;
        }
        total += acc * wi;
    }
    total
}

/// Pairwise truncated Green values; symmetric because G(g) = G(g^{-1}).
fn green_matrix(
    group: &GroupPresentation,
    cache: &GreenCache,
    support: &[GroupElement],
) -> Vec<Vec<f64>> {
    let n = support.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = cross_green(
                group,
                cache,
                std::slice::from_ref(&support[i]),
                std::slice::from_ref(&support[j]),
            );
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    matrix
}

/// Minimizes the Green energy over the probability simplex by conditional
/// gradient steps: from iterate nu, move with step 2/(t+2) toward the vertex
/// whose gradient coordinate 2(G nu)_g is smallest, lowest index on ties.
///
/// Returns the best iterate seen and 1/E as a capacity lower estimate;
/// `converged` records whether the duality gap reached `tolerance` within
/// the iteration cap.
pub fn equilibrium_measure(
    group: &GroupPresentation,
    cache: &GreenCache,
    support: &[GroupElement],
    iterations: usize,
    tolerance: f64,
) -> Result<(SimplexMeasure, CapacityEstimate)> {
    let n = support.len();
    if n == 0 {
        return Err(Error::InvalidParameter("equilibrium measure needs a non-empty set".into()));
    }
    let matrix = green_matrix(group, cache, support);
    for (i, row) in matrix.iter().enumerate() {
        if row[i] <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Green diagonal vanished at {}; horizon too short",
                support[i].encode()
            )));
        }
    }

    let mut nu = vec![1.0 / n as f64; n];
    // grad_half = (G nu); the gradient of E is 2 * grad_half.
    let mut grad_half: Vec<f64> = (0..n)
        .map(|i| matrix[i].iter().zip(&nu).map(|(m, w)| m * w).sum())
        .collect();
    let mut best_energy = quadratic_form(&matrix, &nu);
    let mut best_nu = nu.clone();
    let mut converged = false;

    for t in 0..iterations {
        // E(nu) = nu . grad_half by bilinearity.
        let e_now: f64 = nu.iter().zip(&grad_half).map(|(w, g)| w * g).sum();
        if e_now < best_energy {
            best_energy = e_now;
            best_nu.copy_from_slice(&nu);
        }
        let mut target = 0usize;
        for j in 1..n {
            if grad_half[j] < grad_half[target] {
                target = j;
            }
        }
        let gap = 2.0 * (e_now - grad_half[target]);
        if gap < tolerance {
            converged = true;
            break;
        }
        let step = 2.0 / (t as f64 + 2.0);
        for w in nu.iter_mut() {
            *w *= 1.0 - step;
        }
        nu[target] += step;
        for (g, row) in grad_half.iter_mut().zip(matrix.iter()) {
            *g = *g * (1.0 - step) + step * row[target];
        }
    }

    let final_energy = quadratic_form(&matrix, &nu);
    if final_energy < best_energy {
        best_energy = final_energy;
        best_nu.copy_from_slice(&nu);
    }

    let measure = SimplexMeasure {
        support: support.iter().map(|g| g.encode()).collect(),
        weights: best_nu,
    };
    let estimate = CapacityEstimate {
        set_size: n,
        method: CapacityMethod::VariationalLower,
        point: 1.0 / best_energy,
        std_error: None,
        bracket: None,
        horizon: Some(cache.horizon()),
        radius: None,
        trials: None,
        seed: None,
        converged: Some(converged),
    };
    Ok((measure, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, decode_element, GroupSpec};
    use crate::potential::GreenParams;
    use std::sync::Arc;

    fn lattice3() -> Arc<GroupPresentation> {
        Arc::new(make_group(&GroupSpec::lattice(3)).unwrap())
    }

    #[test]
    fn point_mass_energy_is_the_green_value() {
        let group = lattice3();
        let cache = GreenCache::build(&group, 100, &GreenParams::default()).unwrap();
        let e = group.identity();
        let value = energy(&group, &cache, &[e], &[1.0]);
        assert_eq!(value, cache.value_at_origin());
    }

    #[test]
    fn singleton_equilibrium_is_the_point_mass() {
        let group = lattice3();
        let cache = GreenCache::build(&group, 100, &GreenParams::default()).unwrap();
        let e = group.identity();
        let (nu, est) = equilibrium_measure(&group, &cache, &[e], 10_000, 1e-9).unwrap();
        assert!(nu.is_valid());
        assert_eq!(nu.weights, vec![1.0]);
        assert!((est.point - 1.0 / cache.value_at_origin()).abs() < 1e-12);
        assert_eq!(est.converged, Some(true));
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let group = lattice3();
        let cache = GreenCache::build(&group, 200, &GreenParams::default()).unwrap();
        let a = decode_element(&group, "1;0;0").unwrap();
        let a_inv = decode_element(&group, "-1;0;0").unwrap();
        let (nu, est) = equilibrium_measure(&group, &cache, &[a, a_inv], 200_000, 1e-10).unwrap();
        assert!(nu.is_valid());
        assert!((nu.weights[0] - 0.5).abs() < 1e-4, "weights {:?}", nu.weights);
        assert!((nu.weights[1] - 0.5).abs() < 1e-4);
        assert!(est.point > 0.0);
    }

    #[test]
    fn equilibrium_beats_every_tested_measure() {
        let group = lattice3();
        let cache = GreenCache::build(&group, 150, &GreenParams::default()).unwrap();
        let support: Vec<_> = ["0;0;0", "2;0;0", "0;2;0", "1;1;1"]
            .iter()
            .map(|s| decode_element(&group, s).unwrap())
            .collect();
        let (nu, _) = equilibrium_measure(&group, &cache, &support, 500_000, 1e-9).unwrap();
        let best = energy(&group, &cache, &support, &nu.weights);
        for trial in [
            vec![0.25, 0.25, 0.25, 0.25],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.0, 0.5, 0.5, 0.0],
        ] {
            let e = energy(&group, &cache, &support, &trial);
            assert!(best <= e + 1e-7, "best {best} vs {e} at {trial:?}");
        }
    }

    #[test]
    fn empirical_path_measure_energy_matches_double_sum() {
        let group = lattice3();
        let cache = GreenCache::build(&group, 80, &GreenParams::default()).unwrap();
        let path = crate::walk::simulate(&group, 60, 51, 0);
        // nu_n weights each visited element by its visit count / (n+1).
        let mut counts: std::collections::BTreeMap<GroupElement, usize> = Default::default();
        for p in &path.positions {
            *counts.entry(p.clone()).or_insert(0) += 1;
        }
        let support: Vec<GroupElement> = counts.keys().cloned().collect();
        let total = path.positions.len() as f64;
        let weights: Vec<f64> = counts.values().map(|c| *c as f64 / total).collect();
        let e_nu = energy(&group, &cache, &support, &weights);
        let mut direct = 0.0;
        for x in &path.positions {
            for y in &path.positions {
                direct += cache.value_between(&group, x, y);
            }
        }
        direct /= total * total;
        assert!((e_nu - direct).abs() < 1e-10, "{e_nu} vs {direct}");
    }

    #[test]
    fn variational_value_stays_under_the_bracket_upper_bound() {
        let group = lattice3();
        // Truncating the Green kernel under-states the energy and so
        // over-states 1/E; a tight ball radius leaves the bracket upper
        // bound enough slack to absorb that declared bias.
        let cache = GreenCache::build(&group, 800, &GreenParams { eps: 1e-6, ..Default::default() }).unwrap();
        let support: Vec<_> = ["0;0;0", "1;1;0", "-2;0;1"]
            .iter()
            .map(|s| decode_element(&group, s).unwrap())
            .collect();
        let (_, est) = equilibrium_measure(&group, &cache, &support, 2_000_000, 1e-8).unwrap();
        let bracket = crate::potential::capacity_bracket(&group, &support, 6).unwrap();
        let [lower, upper] = bracket.bracket.unwrap();
        assert!(
            est.point <= upper + 1e-6,
            "variational {} vs upper {upper}",
            est.point
        );
        assert!(est.point >= lower - 1e-6);
    }
}
