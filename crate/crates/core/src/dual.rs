//! The Fleming-Viot dual jump chain on product-form functions.
//!
//! A state `ψ(x₁..x_m) = c·∏ g̃_i(x_i)` jumps by coalescing any pair of
//! coordinates (rate 1 per unordered pair, factors multiply pointwise) or by
//! integrating out one coordinate against `U[0,1]` (rate `θ/2` each). The
//! dimension drops by one per jump, so from dimension `k` the chain is
//! absorbed after exactly `k` jumps and every quantity below is a finite sum
//! over embedded-chain histories.
//!
//! [`SteinSolution`] expands the solution `f_h` of `A₂f = h − E h(Z)` for the
//! generator
//!
//! ```text
//! A₂f(μ) = (θ/2) ∫ ∂ₓf(μ) (π − μ)(dx) + ½ ∫∫ (μ(dx)δₓ(dy) − μ(dx)μ(dy)) ∂ₓᵧf(μ)
//! ```
//!
//! as a linear combination of products `∏ ⟨g̃_i, μ⟩`, with derivatives taken
//! in the additive direction `∂ₓF(μ) = lim (F(μ + εδₓ) − F(μ))/ε`.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, PolyFactor, ProductTestFunction};

/// Largest `k` for [`dp_moment_dual`].
pub const MAX_DUAL_ORDER: usize = 6;
/// Largest `k` for [`SteinSolution`] and the functions built on it.
pub const MAX_STEIN_ORDER: usize = 4;
/// Largest number of probe points for [`fh_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DualFunctionState {
    scalar: f64,
    groups: Vec<PolyFactor>,
}

impl DualFunctionState {
    pub fn new(scalar: f64, groups: Vec<PolyFactor>) -> Self {
        DualFunctionState { scalar, groups }
    }

    pub fn from_test_function(phi: &ProductTestFunction) -> Self {
        Self::new(1.0, phi.factors().to_vec())
    }

    pub fn scalar(&self) -> f64 {
        self.scalar
    }

    pub fn groups(&self) -> &[PolyFactor] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups.len()
    }

    /// Merges coordinates `i < j` into position `i` (pointwise product).
    pub fn coalesce(&self, i: usize, j: usize) -> Result<Self> {
        let m = self.dim();
        if i >= j || j >= m {
            return Err(Error::InvalidArgument(format!(
                "coalesce needs i < j < {m}, got ({i}, {j})"
            )));
        }
        let mut groups = self.groups.clone();
        let gj = groups.remove(j);
        groups[i] = groups[i].mul(&gj);
        Ok(Self::new(self.scalar, groups))
    }

    /// Integrates coordinate `i` against `U[0,1]` into the scalar.
    pub fn mutate(&self, i: usize) -> Result<Self> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.dim(),
            });
        }
        let mut groups = self.groups.clone();
        let g = groups.remove(i);
        Ok(Self::new(self.scalar * g.integrate_uniform(), groups))
    }

    pub fn apply(&self, t: Transition) -> Result<Self> {
        match t {
            Transition::Coalesce(i, j) => self.coalesce(i, j),
            Transition::Mutate(i) => self.mutate(i),
        }
    }

    /// `ψ(x₁..x_m)`.
    pub fn eval_at(&self, xs: &[f64]) -> Result<f64> {
        if xs.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} points for a {}-dimensional state",
                xs.len(),
                self.dim()
            )));
        }
        Ok(self.scalar * self.groups.iter().zip(xs).map(|(g, &x)| g.eval(x)).product::<f64>())
    }

    /// `⟨ψ, μ^m⟩ = c ∏ ⟨g̃_i, μ⟩`.
    pub fn value(&self, mu: &AtomicMeasure) -> f64 {
        self.scalar * self.groups.iter().map(|g| mu.integrate(g)).product::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Coalesce(usize, usize),
    Mutate(usize),
}

/// Jump rates of the dual chain for a fixed `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualChainLaw {
    theta: f64,
}

impl DualChainLaw {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        Ok(DualChainLaw { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `m(m−1)/2 + mθ/2`.
    pub fn total_rate(&self, m: usize) -> f64 {
        let m = m as f64;
        0.5 * m * (m - 1.0 + self.theta)
    }

    /// Embedded-chain transitions at dimension `m ≥ 1`: each pair with
    /// probability `2/(m(m−1+θ))`, each coordinate with `θ/(m(m−1+θ))`.
    pub fn transitions(&self, m: usize) -> Vec<(Transition, f64)> {
        let mf = m as f64;
        let denom = mf * (mf - 1.0 + self.theta);
        let pair = 2.0 / denom;
        let single = self.theta / denom;
        let mut out = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                out.push((Transition::Coalesce(i, j), pair));
            }
        }
        for i in 0..m {
            out.push((Transition::Mutate(i), single));
        }
        out
    }
}

/// Embedded-chain probabilities at dimension `m` in exact arithmetic:
/// pairs first, then single coordinates.
pub fn embedded_probabilities_rational(m: usize, theta: Ratio<i64>) -> Vec<Ratio<i64>> {
    let mm = Ratio::from_integer(m as i64);
    let denom = mm * (mm - Ratio::from_integer(1) + theta);
    let pair = Ratio::from_integer(2) / denom;
    let single = theta / denom;
    let mut out = vec![pair; m * (m.saturating_sub(1)) / 2];
    out.extend(std::iter::repeat_n(single, m));
    out
}

/// Mean holding time `2/(m(m−1+θ))` of the dual chain at dimension `m`.
pub fn mean_holding_time(m: usize, theta: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "the absorbed (dimension 0) state has no holding time".into(),
        ));
    }
    Ok(1.0 / DualChainLaw::new(theta)?.total_rate(m))
}

type StateKey = Vec<Vec<u64>>;

fn canonical(groups: &[PolyFactor]) -> (StateKey, Vec<PolyFactor>) {
    let mut sorted: Vec<PolyFactor> = groups.to_vec();
    let key_of = |g: &PolyFactor| g.coeffs().iter().map(|c| c.to_bits()).collect::<Vec<u64>>();
    sorted.sort_by_key(|g| key_of(g));
    (sorted.iter().map(key_of).collect(), sorted)
}

/// Memoised absorbed means `E[absorbed scalar | start at ψ with scalar 1]`.
/// The memo is keyed by the sorted group list, so results do not depend on
/// coordinate order or on evaluation order.
#[derive(Debug)]
pub struct AbsorbedMeans {
    law: DualChainLaw,
    memo: HashMap<StateKey, f64>,
}

impl AbsorbedMeans {
    pub fn new(theta: f64) -> Result<Self> {
        Ok(AbsorbedMeans {
            law: DualChainLaw::new(theta)?,
            memo: HashMap::new(),
        })
    }

    pub fn get(&mut self, groups: &[PolyFactor]) -> f64 {
        if groups.is_empty() {
            return 1.0;
        }
        let (key, groups) = canonical(groups);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let state = DualFunctionState::new(1.0, groups);
        let mut v = 0.0;
        for (t, p) in self.law.transitions(state.dim()) {
            let next = state.apply(t).expect("transition indices are in range");
            v += p * next.scalar() * self.get(next.groups());
        }
        self.memo.insert(key, v);
        v
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }
}

/// `E⟨φ, Z^k⟩` for `Z ~ DP(θ, U[0,1])` as the expected absorbed value of the
/// dual chain started from `φ`.
pub fn dp_moment_dual(theta: f64, phi: &ProductTestFunction) -> Result<f64> {
    if phi.k() > MAX_DUAL_ORDER {
        return Err(Error::OrderCap {
            what: "dual-recursion moment order",
            order: phi.k(),
            cap: MAX_DUAL_ORDER,
        });
    }
    Ok(AbsorbedMeans::new(theta)?.get(phi.factors()))
}

#[derive(Debug, Clone)]
struct SteinTerm {
    coef: f64,
    groups: Vec<PolyFactor>,
}

/// The Stein solution `f_h(μ) = Σ_t coef_t ∏⟨g̃, μ⟩ + constant`, where the sum
/// runs over distinct non-absorbed states of the dual chain.
///
/// A state `ψ` of dimension `m`, reached with probability `P(ψ)`, contributes
/// `−P(ψ)·2/(m(m−1+θ))·(⟨ψ, μ^m⟩ − E[absorbed | ψ])`. Centering each state by
/// its own absorbed mean is equivalent to subtracting `E h(Z)` because every
/// path visits each dimension once and the absorbed mean is a martingale.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    theta: f64,
    k: usize,
    terms: Vec<SteinTerm>,
    constant: f64,
    target_mean: f64,
}

impl SteinSolution {
    pub fn new(theta: f64, phi: &ProductTestFunction) -> Result<Self> {
        let k = phi.k();
        if k > MAX_STEIN_ORDER {
            return Err(Error::OrderCap {
                what: "Stein solution order",
                order: k,
                cap: MAX_STEIN_ORDER,
            });
        }
        let law = DualChainLaw::new(theta)?;
        let mut means = AbsorbedMeans::new(theta)?;
        let target_mean = means.get(phi.factors());

        let mut terms = Vec::new();
        let mut constant = 0.0;
        let (key, groups) = canonical(phi.factors());
        // weight = Σ over histories of P(history)·scalar
        let mut level: BTreeMap<StateKey, (Vec<PolyFactor>, f64)> = BTreeMap::new();
        level.insert(key, (groups, 1.0));
        for m in (1..=k).rev() {
            let tau = mean_holding_time(m, theta)?;
            let mut next: BTreeMap<StateKey, (Vec<PolyFactor>, f64)> = BTreeMap::new();
            for (groups, weight) in level.into_values() {
                if weight == 0.0 {
                    continue;
                }
                constant += tau * weight * means.get(&groups);
                let state = DualFunctionState::new(1.0, groups);
                for (t, p) in law.transitions(m) {
                    let child = state.apply(t)?;
                    let w = weight * p * child.scalar();
                    let (ckey, cgroups) = canonical(child.groups());
                    next.entry(ckey).or_insert((cgroups, 0.0)).1 += w;
                }
                terms.push(SteinTerm {
                    coef: -tau * weight,
                    groups: state.groups,
                });
            }
            level = next;
        }
        Ok(SteinSolution {
            theta,
            k,
            terms,
            constant,
            target_mean,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `E h(Z)`.
    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// `f_h` with `⟨g, μ⟩` supplied by `pair`; lets callers evaluate at signed
    /// or perturbed measures.
    pub fn value_by(&self, pair: impl Fn(&PolyFactor) -> f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.coef * t.groups.iter().map(&pair).product::<f64>())
                .sum::<f64>()
    }

    pub fn value(&self, mu: &AtomicMeasure) -> f64 {
        self.value_by(|g| mu.integrate(g))
    }

    /// Mixed derivative `∂_{x_1…x_r} f_h(μ)` for `r = points.len() ≤ 3`: the
    /// sum over injective assignments of points to coordinates of
    /// `∏ g̃_{p_a}(x_a) ∏_{unassigned} ⟨g̃_q, μ⟩`.
    pub fn derivative(&self, mu: &AtomicMeasure, points: &[f64]) -> Result<f64> {
        if points.is_empty() || points.len() > MAX_DERIVATIVE_ORDER {
            return Err(Error::InvalidArgument(format!(
                "derivative needs 1 to {MAX_DERIVATIVE_ORDER} points, got {}",
                points.len()
            )));
        }
        Ok(self
            .terms
            .iter()
            .map(|t| {
                let pairs: Vec<f64> = t.groups.iter().map(|g| mu.integrate(g)).collect();
                t.coef * assigned_sum(&t.groups, &pairs, points, &mut vec![false; t.groups.len()])
            })
            .sum())
    }

    /// `∫₀¹ ∂ₓ f_h(μ) dx`, exact since `∂ₓ f_h` is a polynomial in `x`.
    pub fn integrated_first_derivative(&self, mu: &AtomicMeasure) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let pairs: Vec<f64> = t.groups.iter().map(|g| mu.integrate(g)).collect();
                let s: f64 = (0..t.groups.len())
                    .map(|p| {
                        t.groups[p].integrate_uniform()
                            * pairs
                                .iter()
                                .enumerate()
                                .filter(|&(q, _)| q != p)
                                .map(|(_, v)| v)
                                .product::<f64>()
                    })
                    .sum();
                t.coef * s
            })
            .sum()
    }

    /// The two halves of `A₂ f_h(μ)`: the mutation part
    /// `∫∂ₓf dx − Σ w_i ∂_{x_i} f` and the resampling part
    /// `Σ w_i ∂_{x_i x_i} f − Σ_{i,j} w_i w_j ∂_{x_i x_j} f`, both unscaled.
    pub fn generator_parts(&self, mu: &AtomicMeasure) -> Result<(f64, f64)> {
        let atoms: Vec<(f64, f64)> = mu.atoms().collect();
        let mut mutation = self.integrated_first_derivative(mu);
        let mut resampling = 0.0;
        for &(x, w) in &atoms {
            mutation -= w * self.derivative(mu, &[x])?;
            resampling += w * self.derivative(mu, &[x, x])?;
            for &(y, v) in &atoms {
                resampling -= w * v * self.derivative(mu, &[x, y])?;
            }
        }
        Ok((mutation, resampling))
    }
}

fn assigned_sum(groups: &[PolyFactor], pairs: &[f64], points: &[f64], used: &mut Vec<bool>) -> f64 {
    let Some((&x, rest)) = points.split_first() else {
        return pairs
            .iter()
            .zip(used.iter())
            .filter(|(_, &u)| !u)
            .map(|(v, _)| v)
            .product();
    };
    let mut s = 0.0;
    for p in 0..groups.len() {
        if used[p] {
            continue;
        }
        used[p] = true;
        s += groups[p].eval(x) * assigned_sum(groups, pairs, rest, used);
        used[p] = false;
    }
    s
}

/// `f_h(μ)` for `h = ⟨φ, μ^k⟩`, `k ≤ 4`.
pub fn eval_fh(theta: f64, phi: &ProductTestFunction, mu: &AtomicMeasure) -> Result<f64> {
    mu.require_probability()?;
    Ok(SteinSolution::new(theta, phi)?.value(mu))
}

/// `∂_{x}f_h`, `∂_{xy}f_h` or `∂_{xyz}f_h` at `μ` for one to three points.
pub fn fh_derivative(
    theta: f64,
    phi: &ProductTestFunction,
    mu: &AtomicMeasure,
    points: &[f64],
) -> Result<f64> {
    mu.require_probability()?;
    SteinSolution::new(theta, phi)?.derivative(mu, points)
}

/// Residuals of the Stein equation at `μ` under two generator scalings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinResidual {
    /// `A₂f_h(μ) − (h(μ) − E h(Z))` with the `(θ/2, ½)` generator.
    pub halved: f64,
    /// Same with the `(θ, 1)` generator, i.e. `2A₂f_h(μ) − (h(μ) − E h(Z))`.
    pub unhalved: f64,
}

pub fn stein_residuals(
    theta: f64,
    phi: &ProductTestFunction,
    mu: &AtomicMeasure,
) -> Result<SteinResidual> {
    mu.require_probability()?;
    let sol = SteinSolution::new(theta, phi)?;
    stein_residuals_of(&sol, phi, mu)
}

pub fn stein_residuals_of(
    sol: &SteinSolution,
    phi: &ProductTestFunction,
    mu: &AtomicMeasure,
) -> Result<SteinResidual> {
    let (mutation, resampling) = sol.generator_parts(mu)?;
    let rhs = phi.moment(mu) - sol.target_mean();
    Ok(SteinResidual {
        halved: 0.5 * sol.theta() * mutation + 0.5 * resampling - rhs,
        unhalved: sol.theta() * mutation + resampling - rhs,
    })
}

/// `A₂f_h(μ) − (h(μ) − E h(Z))` with the `(θ/2, ½)`-normalised generator.
pub fn stein_residual(theta: f64, phi: &ProductTestFunction, mu: &AtomicMeasure) -> Result<f64> {
    Ok(stein_residuals(theta, phi, mu)?.halved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::dp_moment_partition_sum;
    use crate::rng::{rng_from_seed, SimRng};
    use rand::Rng;

    fn poly(c: &[f64]) -> PolyFactor {
        PolyFactor::new(c.to_vec()).unwrap()
    }

    fn random_phi(rng: &mut SimRng, k: usize, max_deg: usize) -> ProductTestFunction {
        ProductTestFunction::new(
            (0..k)
                .map(|_| {
                    let d = rng.random_range(0..=max_deg);
                    poly(&(0..=d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_mu(rng: &mut SimRng, max_atoms: usize) -> AtomicMeasure {
        let n = rng.random_range(1..=max_atoms);
        let raw: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>() + 0.01)).collect();
        let total: f64 = raw.iter().map(|a| a.1).sum();
        AtomicMeasure::merging(raw.into_iter().map(|(x, w)| (x, w / total)).collect()).unwrap()
    }

    #[test]
    fn coalesce_examples() {
        let s = DualFunctionState::new(1.0, vec![poly(&[0.0, 1.0]), poly(&[0.0, 1.0])]);
        let c = s.coalesce(0, 1).unwrap();
        assert_eq!(c.dim(), 1);
        assert_eq!(c.groups()[0].coeffs(), &[0.0, 0.0, 1.0]);

        let g = poly(&[0.5, -1.0, 2.0]);
        let s = DualFunctionState::new(3.0, vec![PolyFactor::one(), g.clone()]);
        let c = s.coalesce(0, 1).unwrap();
        assert_eq!(c.groups(), std::slice::from_ref(&g));
        assert_eq!(c.scalar(), 3.0);

        let s = DualFunctionState::new(1.0, vec![g.clone(), poly(&[1.0, 1.0, 1.0, 1.0])]);
        assert_eq!(s.coalesce(0, 1).unwrap().groups()[0].degree(), 5);
        assert!(s.coalesce(1, 0).is_err());
        assert!(s.coalesce(0, 2).is_err());
    }

    #[test]
    fn mutate_examples() {
        let s = DualFunctionState::new(1.0, vec![poly(&[0.0, 1.0])]);
        let m = s.mutate(0).unwrap();
        assert_eq!((m.scalar(), m.dim()), (0.5, 0));
        let s = DualFunctionState::new(2.0, vec![PolyFactor::one(), poly(&[0.0, 1.0])]);
        assert_eq!(s.mutate(0).unwrap().scalar(), 2.0);
        let s = DualFunctionState::new(3.0, vec![poly(&[0.0, 0.0, 1.0])]);
        assert!((s.mutate(0).unwrap().scalar() - 1.0).abs() < 1e-15);
        assert!(s.mutate(1).is_err());
    }

    /// Composes the original φ with recorded transitions as plain closures,
    /// integrating numerically, and compares with the state's evaluation.
    #[test]
    fn state_matches_composed_history() {
        type F = Box<dyn Fn(&[f64]) -> f64>;
        fn gauss_legendre(f: impl Fn(f64) -> f64) -> f64 {
            // 10-point rule mapped to [0,1], exact for degree <= 19
            const X: [f64; 5] = [0.148_874_338_981_631_2, 0.433_395_394_129_247_2, 0.679_409_568_299_024_4, 0.865_063_366_688_984_5, 0.973_906_528_517_171_7];
            const W: [f64; 5] = [0.295_524_224_714_752_9, 0.269_266_719_309_996_4, 0.219_086_362_515_982, 0.149_451_349_150_580_6, 0.066_671_344_308_688_1];
            X.iter().zip(W).map(|(&x, w)| 0.5 * w * (f(0.5 + 0.5 * x) + f(0.5 - 0.5 * x))).sum()
        }
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let phi = random_phi(&mut rng, 4, 3);
            let mut state = DualFunctionState::from_test_function(&phi);
            let factors = phi.factors().to_vec();
            let mut composed: F = Box::new(move |xs: &[f64]| factors.iter().zip(xs).map(|(g, &x)| g.eval(x)).product());
            while state.dim() > 1 {
                let m = state.dim();
                let t = if rng.random::<bool>() {
                    let i = rng.random_range(0..m - 1);
                    Transition::Coalesce(i, rng.random_range(i + 1..m))
                } else {
                    Transition::Mutate(rng.random_range(0..m))
                };
                state = state.apply(t).unwrap();
                let prev = composed;
                composed = match t {
                    Transition::Coalesce(i, j) => Box::new(move |xs: &[f64]| {
                        let mut full = xs.to_vec();
                        full.insert(j, xs[i]);
                        prev(&full)
                    }),
                    Transition::Mutate(i) => Box::new(move |xs: &[f64]| {
                        gauss_legendre(|y| {
                            let mut full = xs.to_vec();
                            full.insert(i, y);
                            prev(&full)
                        })
                    }),
                };
            }
            for _ in 0..5 {
                let xs: Vec<f64> = (0..state.dim()).map(|_| rng.random()).collect();
                let a = state.eval_at(&xs).unwrap();
                let b = composed(&xs);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn holding_times() {
        assert_eq!(mean_holding_time(2, 1.0).unwrap(), 0.5);
        assert_eq!(mean_holding_time(1, 2.0).unwrap(), 1.0);
        assert!(mean_holding_time(0, 1.0).is_err());
        let mut prev = f64::INFINITY;
        for theta in [0.1, 1.0, 10.0, 1e3, 1e6] {
            let t = mean_holding_time(1, theta).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn embedded_probabilities_sum_to_one_exactly() {
        for theta in [Ratio::new(1, 2), Ratio::from_integer(1), Ratio::from_integer(2), Ratio::new(7, 3)] {
            for m in 1..=8 {
                let p = embedded_probabilities_rational(m, theta);
                assert_eq!(p.len(), m * (m - 1) / 2 + m);
                assert_eq!(p.iter().sum::<Ratio<i64>>(), Ratio::from_integer(1));
            }
        }
        let law = DualChainLaw::new(0.5).unwrap();
        let s: f64 = law.transitions(5).iter().map(|t| t.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn embedded_probabilities_are_a_distribution(num in 1i64..50, den in 1i64..50, m in 1usize..10) {
            let p = embedded_probabilities_rational(m, Ratio::new(num, den));
            proptest::prop_assert_eq!(p.iter().sum::<Ratio<i64>>(), Ratio::from_integer(1));
            proptest::prop_assert!(p.iter().all(|q| *q > Ratio::from_integer(0)));
        }

        #[test]
        fn residual_vanishes(seed in proptest::prelude::any::<u64>(), theta in 0.1f64..5.0) {
            let mut rng = rng_from_seed(seed);
            let k = rng.random_range(1..=3);
            let phi = random_phi(&mut rng, k, 3);
            let mu = random_mu(&mut rng, 5);
            let r = stein_residuals(theta, &phi, &mu).unwrap();
            proptest::prop_assert!(r.halved.abs() < 1e-8, "{}", r.halved);
        }
    }

    #[test]
    fn dual_moment_examples() {
        let x = ProductTestFunction::monomial_product(&[1]).unwrap();
        let xy = ProductTestFunction::monomial_product(&[1, 1]).unwrap();
        for theta in [0.3, 1.0, 4.0] {
            assert!((dp_moment_dual(theta, &x).unwrap() - 0.5).abs() < 1e-15);
            let expected = (1.0 / (1.0 + theta)) / 3.0 + (theta / (1.0 + theta)) / 4.0;
            assert!((dp_moment_dual(theta, &xy).unwrap() - expected).abs() < 1e-15);
            for k in 1..=MAX_DUAL_ORDER {
                let one = ProductTestFunction::constant_one(k).unwrap();
                assert!((dp_moment_dual(theta, &one).unwrap() - 1.0).abs() < 1e-13);
            }
        }
        assert!((dp_moment_dual(1.0, &xy).unwrap() - 7.0 / 24.0).abs() < 1e-15);
        let big = ProductTestFunction::constant_one(MAX_DUAL_ORDER + 1).unwrap();
        assert!(matches!(dp_moment_dual(1.0, &big), Err(Error::OrderCap { .. })));
    }

    #[test]
    fn dual_matches_partition_sum() {
        let mut rng = rng_from_seed(101);
        for theta in [0.5, 1.0, 2.0] {
            for _ in 0..20 {
                let k = rng.random_range(1..=5);
                let phi = random_phi(&mut rng, k, 3);
                let a = dp_moment_dual(theta, &phi).unwrap();
                let b = dp_moment_partition_sum(theta, &phi).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()) + 1e-15, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn memo_is_order_independent() {
        let g = [poly(&[0.1, 0.3]), poly(&[1.0, -2.0, 0.5]), poly(&[0.0, 0.0, 0.0, 1.0])];
        let mut a = AbsorbedMeans::new(1.3).unwrap();
        let v1 = a.get(&g);
        let mut b = AbsorbedMeans::new(1.3).unwrap();
        let v2 = b.get(&[g[2].clone(), g[0].clone(), g[1].clone()]);
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn fh_examples() {
        let mut rng = rng_from_seed(1);
        let x = ProductTestFunction::monomial_product(&[1]).unwrap();
        for theta in [0.5, 1.0, 2.0] {
            for _ in 0..20 {
                let mu = random_mu(&mut rng, 5);
                let closed = -(2.0 / theta) * (mu.integrate(&poly(&[0.0, 1.0])) - 0.5);
                assert!((eval_fh(theta, &x, &mu).unwrap() - closed).abs() < 1e-14);
                for k in 1..=4 {
                    let one = ProductTestFunction::constant_one(k).unwrap();
                    assert!(eval_fh(theta, &one, &mu).unwrap().abs() < 1e-13);
                }
            }
        }
        let mu = AtomicMeasure::probability(vec![(0.25, 0.5), (0.75, 0.5)]).unwrap();
        assert!(eval_fh(1.0, &x, &mu).unwrap().abs() < 1e-15);
        let not_prob = AtomicMeasure::new(vec![(0.5, 0.5)]).unwrap();
        assert!(eval_fh(1.0, &x, &not_prob).is_err());
        let big = ProductTestFunction::constant_one(5).unwrap();
        assert!(eval_fh(1.0, &big, &mu).is_err());
    }

    #[test]
    fn derivative_examples() {
        let x = ProductTestFunction::monomial_product(&[1]).unwrap();
        let mu = AtomicMeasure::probability(vec![(0.1, 0.3), (0.8, 0.7)]).unwrap();
        assert!((fh_derivative(2.0, &x, &mu, &[1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(fh_derivative(2.0, &x, &mu, &[0.3, 0.6]).unwrap().abs() < 1e-15);
        assert!(fh_derivative(2.0, &x, &mu, &[0.3, 0.3]).unwrap().abs() < 1e-15);
        assert!(fh_derivative(2.0, &x, &mu, &[0.1, 0.2, 0.3, 0.4]).is_err());
        assert!(fh_derivative(2.0, &x, &mu, &[]).is_err());
    }

    /// Central differences of f_h on perturbed, unnormalised measures.
    fn finite_difference(sol: &SteinSolution, mu: &AtomicMeasure, points: &[f64], h: f64) -> f64 {
        let r = points.len();
        let mut acc = 0.0;
        for signs in 0..(1u32 << r) {
            let s: Vec<f64> = (0..r).map(|a| if signs >> a & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let v = sol.value_by(|g| {
                mu.integrate(g) + points.iter().zip(&s).map(|(&x, &si)| si * h * g.eval(x)).sum::<f64>()
            });
            acc += s.iter().product::<f64>() * v;
        }
        acc / (2.0 * h).powi(r as i32)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = rng_from_seed(44);
        for _ in 0..200 {
            let theta = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let k = rng.random_range(1..=4);
            let phi = random_phi(&mut rng, k, 3);
            let sol = SteinSolution::new(theta, &phi).unwrap();
            let mu = random_mu(&mut rng, 4);
            let pts: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            for r in 1..=3 {
                // the r = 3 difference is exact for total degree <= 4, so a
                // wider step avoids cancellation without truncation error
                let h = if r == 3 { 1e-2 } else { 1e-4 };
                let fd = finite_difference(&sol, &mu, &pts[..r], h);
                let exact = sol.derivative(&mu, &pts[..r]).unwrap();
                assert!((fd - exact).abs() < 1e-6, "r={r}: {fd} vs {exact}");
            }
            let fd = finite_difference(&sol, &mu, &[pts[0], pts[0]], 1e-4);
            assert!((fd - sol.derivative(&mu, &[pts[0], pts[0]]).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn residual_examples() {
        let mut rng = rng_from_seed(90);
        let x = ProductTestFunction::monomial_product(&[1]).unwrap();
        for theta in [0.5, 1.0, 2.0] {
            for _ in 0..20 {
                let mu = random_mu(&mut rng, 5);
                assert!(stein_residual(theta, &x, &mu).unwrap().abs() < 1e-12);
                let one = ProductTestFunction::constant_one(2).unwrap();
                assert!(stein_residual(theta, &one, &mu).unwrap().abs() < 1e-12);
            }
        }
        let xy = ProductTestFunction::monomial_product(&[1, 1]).unwrap();
        let mu = AtomicMeasure::probability(vec![(0.2, 0.3), (0.9, 0.7)]).unwrap();
        assert!(stein_residual(1.0, &xy, &mu).unwrap().abs() < 1e-8);
    }

    #[test]
    fn unhalved_generator_doubles_the_action() {
        // With the (θ, 1) scaling the generator applied to f_h gives
        // 2(h − E h(Z)), so that residual equals h − E h(Z).
        let mut rng = rng_from_seed(5);
        let phi = random_phi(&mut rng, 3, 2);
        let mu = random_mu(&mut rng, 4);
        let r = stein_residuals(1.5, &phi, &mu).unwrap();
        let rhs = phi.moment(&mu) - dp_moment_dual(1.5, &phi).unwrap();
        assert!(r.halved.abs() < 1e-10);
        assert!((r.unhalved - rhs).abs() < 1e-10);
    }
}
