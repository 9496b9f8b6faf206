//! Random test functions, measures and derivative probes for the
//! verification suites.

use rand::Rng;
use serde_json::{json, Value};

use crate::bounds::stein_factors;
use crate::dual::SteinSolution;
use crate::error::Result;
use crate::measures::{AtomicMeasure, PolyFactor, ProductTestFunction};

/// `k` factors of random degree `0..=max_degree` with coefficients in `[-1, 1)`.
pub fn random_test_function<R: Rng + ?Sized>(rng: &mut R, k: usize, max_degree: usize) -> ProductTestFunction {
    let factors = (0..k)
        .map(|_| {
            let d = rng.random_range(0..=max_degree);
            let coeffs = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
            PolyFactor::new(coeffs).expect("degree is below the cap")
        })
        .collect();
    ProductTestFunction::new(factors).expect("k is positive")
}

/// Like [`random_test_function`] with coefficients in `[0, 1)`, so every
/// moment is a sum of non-negative terms.
pub fn random_nonnegative_test_function<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    max_degree: usize,
) -> ProductTestFunction {
    let factors = (0..k)
        .map(|_| {
            let d = rng.random_range(0..=max_degree);
            let coeffs = (0..=d).map(|_| rng.random::<f64>()).collect();
            PolyFactor::new(coeffs).expect("degree is below the cap")
        })
        .collect();
    ProductTestFunction::new(factors).expect("k is positive")
}

/// A probability measure with `1..=max_atoms` atoms at uniform locations and
/// normalised random weights.
pub fn random_probability<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> AtomicMeasure {
    let n = rng.random_range(1..=max_atoms);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>() + 1e-3))
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    AtomicMeasure::merging(raw.into_iter().map(|(x, w)| (x, w / total)).collect())
        .expect("locations lie in [0,1)")
}

/// One random derivative probe: returns the largest excess of `|∂f_h|` over
/// its Stein factor across the three orders, with the case as JSON.
pub fn stein_factor_probe<R: Rng + ?Sized>(rng: &mut R) -> Result<(f64, Value)> {
    let theta = match rng.random_range(0..4) {
        0 => 0.5,
        1 => 1.0,
        2 => 2.0,
        _ => rng.random_range(0.1..10.0),
    };
    let k = rng.random_range(1..=4);
    let phi = random_test_function(rng, k, 3);
    let mu = random_probability(rng, 6);
    let atoms = mu.locations().to_vec();
    let point = |rng: &mut R| {
        if rng.random_bool(0.3) {
            atoms[rng.random_range(0..atoms.len())]
        } else {
            rng.random::<f64>()
        }
    };
    let x = point(rng);
    let y = if rng.random_bool(0.2) { x } else { point(rng) };
    let z = point(rng);
    let sol = SteinSolution::new(theta, &phi)?;
    let (b1, b2, b3) = stein_factors(theta, k, phi.sup_norm_bound())?;
    let d1 = sol.derivative(&mu, &[x])?;
    let d2 = sol.derivative(&mu, &[x, y])?;
    let d3 = sol.derivative(&mu, &[x, y, z])?;
    let excess = (d1.abs() - b1).max(d2.abs() - b2).max(d3.abs() - b3);
    let case = json!({
        "theta": theta, "phi": phi, "mu": mu, "points": [x, y, z],
        "derivatives": [d1, d2, d3], "bounds": [b1, b2, b3],
    });
    Ok((excess, case))
}
