//! Closed-form approximation bounds between the inclusion process and the
//! Dirichlet process, and the Stein factors behind them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three additive terms of a bound: the `1/L` lattice (Riemann) term, the
/// `1/N` mutation term and the `1/N` third-derivative term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    #[serde(rename = "N")]
    pub particles: u32,
    #[serde(rename = "L")]
    pub sites: usize,
    pub theta: f64,
    /// `k` for moment bounds, `n` for partition bounds.
    pub order: usize,
    pub sup_norm: f64,
    pub term_riemann: f64,
    pub term_mutation: f64,
    pub term_third: f64,
    pub total: f64,
}

fn check(particles: u32, sites: usize, theta: f64, order: usize, sup_norm: f64) -> Result<()> {
    if particles == 0 || sites == 0 {
        return Err(Error::InvalidArgument("N and L must be at least 1".into()));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
    }
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if !(sup_norm >= 0.0 && sup_norm.is_finite()) {
        return Err(Error::InvalidArgument(format!("sup norm must be non-negative, got {sup_norm}")));
    }
    Ok(())
}

fn breakdown(particles: u32, sites: usize, theta: f64, order: usize, s: f64) -> BoundBreakdown {
    let k = order as f64;
    let n = f64::from(particles);
    let l = sites as f64;
    let pairs = k * (k - 1.0);
    let term_riemann = pairs / (2.0 * l * (theta + 1.0)) * s;
    let term_mutation = 2.0 * pairs * theta / (n * (theta + 1.0)) * s;
    let term_third = 8.0 * pairs * (k - 2.0).max(0.0) / (9.0 * n * (theta + 2.0)) * s;
    BoundBreakdown {
        particles,
        sites,
        theta,
        order,
        sup_norm: s,
        term_riemann,
        term_mutation,
        term_third,
        total: term_riemann + term_mutation + term_third,
    }
}

/// Bound on `|E⟨φ, W^k⟩ − E⟨φ, Z^k⟩|` with `sup_norm ≥ ‖φ‖∞`.
pub fn moment_bound(
    particles: u32,
    sites: usize,
    theta: f64,
    k: usize,
    sup_norm: f64,
) -> Result<BoundBreakdown> {
    check(particles, sites, theta, k, sup_norm)?;
    Ok(breakdown(particles, sites, theta, k, sup_norm))
}

/// Bound on the total-variation distance between the partition laws of a
/// size-`n` sample from `W` and from `Z`.
pub fn partition_bound(particles: u32, sites: usize, theta: f64, n: usize) -> Result<BoundBreakdown> {
    check(particles, sites, theta, n, 1.0)?;
    Ok(breakdown(particles, sites, theta, n, 1.0))
}

/// Bounds on the first, second and third derivatives of the Stein solution:
/// `2k/θ`, `k(k−1)/(θ+1)` and `2k(k−1)(k−2)/(3(θ+2))`, each times `sup_norm`.
pub fn stein_factors(theta: f64, k: usize, sup_norm: f64) -> Result<(f64, f64, f64)> {
    check(1, 1, theta, k, sup_norm)?;
    let kf = k as f64;
    let first = 2.0 * kf / theta;
    let second = kf * (kf - 1.0) / (theta + 1.0);
    let third = 2.0 * kf * (kf - 1.0) * (kf - 2.0).max(0.0) / (3.0 * (theta + 2.0));
    Ok((first * sup_norm, second * sup_norm, third * sup_norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14 * b.abs().max(1e-300)
    }

    #[test]
    fn moment_bound_examples() {
        let b = moment_bound(100, 100, 1.0, 2, 1.0).unwrap();
        assert!(close(b.term_riemann, 0.005) && close(b.term_mutation, 0.02));
        assert_eq!(b.term_third, 0.0);
        assert!(close(b.total, 0.025));

        let b = moment_bound(1000, 500, 2.0, 3, 1.0).unwrap();
        assert!(close(b.term_riemann, 0.002));
        assert!(close(b.term_mutation, 0.008));
        assert!(close(b.term_third, 0.004 / 3.0));
        assert!(close(b.total, 0.034 / 3.0));

        for (n, l, theta) in [(1, 1, 0.1), (50, 7, 3.0)] {
            assert_eq!(moment_bound(n, l, theta, 1, 5.0).unwrap().total, 0.0);
        }
        assert!(moment_bound(0, 1, 1.0, 2, 1.0).is_err());
        assert!(moment_bound(1, 1, 0.0, 2, 1.0).is_err());
        assert!(moment_bound(1, 1, 1.0, 2, -1.0).is_err());
    }

    #[test]
    fn partition_bound_examples() {
        let b = partition_bound(100, 50, 1.0, 2).unwrap();
        assert!(close(b.term_riemann, 0.01) && close(b.term_mutation, 0.02));
        assert!(close(b.total, 0.03));
        assert_eq!(partition_bound(9, 4, 2.0, 1).unwrap().total, 0.0);
        let b = partition_bound(2, 2, 1.0, 2).unwrap();
        assert!(close(b.term_riemann, 0.25) && close(b.term_mutation, 1.0));
        assert!(close(b.total, 1.25));
    }

    #[test]
    fn stein_factor_examples() {
        assert_eq!(stein_factors(1.0, 1, 1.0).unwrap(), (2.0, 0.0, 0.0));
        let (a, b, c) = stein_factors(2.0, 3, 1.0).unwrap();
        assert!(close(a, 3.0) && close(b, 2.0) && close(c, 1.0));
        assert_eq!(stein_factors(0.7, 4, 0.0).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn total_is_sum_of_terms() {
        for n in [1u32, 3, 100] {
            for k in 1..8 {
                let b = moment_bound(n, 7, 0.3, k, 2.5).unwrap();
                let s = b.term_riemann + b.term_mutation + b.term_third;
                assert!((b.total - s).abs() <= 1e-14 * s.abs());
            }
        }
    }

    #[test]
    fn monotone_in_n_l_and_k() {
        let ns = [1u32, 2, 5, 10, 100, 1000];
        let ls = [1usize, 2, 3, 10, 64, 1000];
        for theta in [0.1, 1.0, 5.0] {
            for k in 1..7 {
                for w in ns.windows(2) {
                    for &l in &ls {
                        let a = moment_bound(w[0], l, theta, k, 1.0).unwrap();
                        let b = moment_bound(w[1], l, theta, k, 1.0).unwrap();
                        assert!(b.term_riemann <= a.term_riemann);
                        assert!(b.term_mutation <= a.term_mutation);
                        assert!(b.term_third <= a.term_third);
                    }
                }
                for w in ls.windows(2) {
                    for &n in &ns {
                        let a = moment_bound(n, w[0], theta, k, 1.0).unwrap();
                        let b = moment_bound(n, w[1], theta, k, 1.0).unwrap();
                        assert!(b.term_riemann <= a.term_riemann);
                        assert!(b.term_mutation <= a.term_mutation && b.term_third <= a.term_third);
                    }
                }
                for &n in &ns {
                    for &l in &ls {
                        let a = moment_bound(n, l, theta, k, 1.0).unwrap();
                        let b = moment_bound(n, l, theta, k + 1, 1.0).unwrap();
                        assert!(b.term_riemann >= a.term_riemann);
                        assert!(b.term_mutation >= a.term_mutation);
                        assert!(b.term_third >= a.term_third);
                    }
                }
            }
        }
    }

    #[test]
    fn moment_and_partition_bounds_coincide() {
        for (n, l, theta) in [(2, 2, 1.0), (8, 6, 0.5), (64, 64, 2.0)] {
            for k in 1..6 {
                let a = moment_bound(n, l, theta, k, 1.0).unwrap();
                let b = partition_bound(n, l, theta, k).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn sweep_scaling_is_constant() {
        // with L = N/θ, N·bound = θk(k−1)/(2(θ+1)) + 2k(k−1)θ/(θ+1) for k = 2
        let theta = 1.0;
        let expected = theta * 2.0 / (2.0 * (theta + 1.0)) + 4.0 * theta / (theta + 1.0);
        for n in [8u32, 16, 32, 64] {
            let b = moment_bound(n, n as usize, theta, 2, 1.0).unwrap();
            assert!(close(b.total * f64::from(n), expected));
        }
    }

    proptest::proptest! {
        #[test]
        fn terms_are_non_negative_and_sum(
            n in 1u32..10_000,
            l in 1usize..10_000,
            theta in 0.01f64..100.0,
            k in 1usize..12,
            s in 0.0f64..10.0,
        ) {
            let b = moment_bound(n, l, theta, k, s).unwrap();
            proptest::prop_assert!(b.term_riemann >= 0.0 && b.term_mutation >= 0.0 && b.term_third >= 0.0);
            let sum = b.term_riemann + b.term_mutation + b.term_third;
            proptest::prop_assert!((b.total - sum).abs() <= 1e-14 * sum);
            let c = partition_bound(n, l, theta, k).unwrap();
            let unit = moment_bound(n, l, theta, k, 1.0).unwrap();
            proptest::prop_assert_eq!(c, unit);
        }
    }

    #[test]
    fn json_roundtrip() {
        let b = moment_bound(6, 4, 1.0, 2, 1.0).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains("\"N\":6") && s.contains("term_riemann"));
        assert_eq!(serde_json::from_str::<BoundBreakdown>(&s).unwrap(), b);
    }
}
