//! Atomic measures on `[0, 1]`, polynomial factors and product-form moment
//! test functions `h(μ) = ⟨φ, μ^k⟩` with `φ(x₁..x_k) = ∏ g_j(x_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree accepted for a user-supplied factor. Internal products
/// formed by the dual chain may exceed it.
pub const MAX_DEGREE: usize = 16;

/// Number of intervals in the sup-norm evaluation grid.
pub const SUP_GRID_INTERVALS: usize = 10_000;

const PROBABILITY_TOL: f64 = 1e-12;

/// A polynomial on `[0, 1]` in the power basis, constant term first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolyFactor {
    coeffs: Vec<f64>,
    sup: f64,
}

impl PolyFactor {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
        }
        let p = Self::from_coeffs(coeffs);
        if p.degree() > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree {} exceeds cap {MAX_DEGREE}",
                p.degree()
            )));
        }
        Ok(p)
    }

    /// Unchecked constructor; trims trailing zeros so equal polynomials have
    /// equal coefficient vectors.
    pub(crate) fn from_coeffs(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        let sup = sup_norm_estimate(&coeffs);
        PolyFactor { coeffs, sup }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_coeffs(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// `c·x^a`.
    pub fn monomial(c: f64, a: usize) -> Self {
        let mut coeffs = vec![0.0; a + 1];
        coeffs[a] = c;
        Self::from_coeffs(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `∫₀¹ g(x) dx = Σ c_a / (a+1)`.
    pub fn integrate_uniform(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(a, &c)| c / (a as f64 + 1.0))
            .sum()
    }

    /// Upper bound on `sup_{[0,1]} |g|`; exact for monomials and constants.
    pub fn sup_norm_bound(&self) -> f64 {
        self.sup
    }

    /// Pointwise product.
    pub fn mul(&self, other: &PolyFactor) -> PolyFactor {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (a, &x) in self.coeffs.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in other.coeffs.iter().enumerate() {
                out[a + b] += x * y;
            }
        }
        PolyFactor::from_coeffs(out)
    }

    pub fn scale(&self, s: f64) -> PolyFactor {
        PolyFactor::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() == 1
    }
}

impl TryFrom<Vec<f64>> for PolyFactor {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        PolyFactor::new(coeffs)
    }
}

impl From<PolyFactor> for Vec<f64> {
    fn from(p: PolyFactor) -> Self {
        p.coeffs
    }
}

fn sup_norm_estimate(coeffs: &[f64]) -> f64 {
    let nonzero: Vec<usize> = (0..coeffs.len()).filter(|&a| coeffs[a] != 0.0).collect();
    match nonzero.as_slice() {
        [] => return 0.0,
        // c·x^a is monotone in |·| on [0,1] and peaks at x = 1
        [a] => return coeffs[*a].abs(),
        _ => {}
    }
    let h = 1.0 / SUP_GRID_INTERVALS as f64;
    let mut grid_max: f64 = 0.0;
    for i in 0..=SUP_GRID_INTERVALS {
        let x = i as f64 * h;
        let v = coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c);
        grid_max = grid_max.max(v.abs());
    }
    // Every x lies within h/2 of a grid point and between two grid points.
    let d1: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(a, c)| a as f64 * c.abs())
        .sum();
    let d2: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(a, c)| (a as f64) * (a as f64 - 1.0).max(0.0) * c.abs())
        .sum();
    let lipschitz = 0.5 * h * d1;
    let interpolation = 0.125 * h * h * d2;
    grid_max + lipschitz.min(interpolation)
}

/// `h(μ) = ⟨φ, μ^k⟩` for `φ(x₁..x_k) = ∏_j g_j(x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestFunctionRepr", into = "TestFunctionRepr")]
pub struct ProductTestFunction {
    factors: Vec<PolyFactor>,
}

#[derive(Serialize, Deserialize)]
struct TestFunctionRepr {
    k: usize,
    factors: Vec<PolyFactor>,
}

impl TryFrom<TestFunctionRepr> for ProductTestFunction {
    type Error = Error;

    fn try_from(r: TestFunctionRepr) -> Result<Self> {
        if r.k != r.factors.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {} but {} factors given",
                r.k,
                r.factors.len()
            )));
        }
        ProductTestFunction::new(r.factors)
    }
}

impl From<ProductTestFunction> for TestFunctionRepr {
    fn from(f: ProductTestFunction) -> Self {
        TestFunctionRepr {
            k: f.factors.len(),
            factors: f.factors,
        }
    }
}

impl ProductTestFunction {
    pub fn new(factors: Vec<PolyFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("test function needs k >= 1".into()));
        }
        Ok(ProductTestFunction { factors })
    }

    /// Builds `φ = ∏ x_j^{a_j}`.
    pub fn monomial_product(exponents: &[usize]) -> Result<Self> {
        Self::new(exponents.iter().map(|&a| PolyFactor::monomial(1.0, a)).collect())
    }

    /// `φ ≡ 1` on `E^k`.
    pub fn constant_one(k: usize) -> Result<Self> {
        Self::new(vec![PolyFactor::one(); k])
    }

    pub fn from_coeffs(factors: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            factors
                .into_iter()
                .map(PolyFactor::new)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[PolyFactor] {
        &self.factors
    }

    /// Upper bound on `‖φ‖∞`: product of the factor bounds.
    pub fn sup_norm_bound(&self) -> f64 {
        self.factors.iter().map(PolyFactor::sup_norm_bound).product()
    }

    /// `∏_j ⟨g_j, μ⟩`, valid for any finite measure.
    pub fn moment(&self, mu: &AtomicMeasure) -> f64 {
        self.factors.iter().map(|g| mu.integrate(g)).product()
    }

    /// Like [`moment`](Self::moment) but rejects measures that are not
    /// probability measures.
    pub fn checked_moment(&self, mu: &AtomicMeasure) -> Result<f64> {
        mu.require_probability()?;
        Ok(self.moment(mu))
    }

    /// Appends a factor, increasing `k` by one.
    pub fn with_factor(&self, g: PolyFactor) -> Self {
        let mut factors = self.factors.clone();
        factors.push(g);
        ProductTestFunction { factors }
    }
}

/// A finitely supported non-negative measure on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Validates locations in `[0, 1]`, pairwise distinct, and weights finite and
    /// non-negative.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut locations = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidArgument(format!("location {x} outside [0,1]")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!("weight {w} is not a finite non-negative number")));
            }
            locations.push(x);
            weights.push(w);
        }
        let mut sorted = locations.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("atom locations must be distinct".into()));
        }
        Ok(AtomicMeasure { locations, weights })
    }

    /// Like [`new`](Self::new) but also requires total mass 1 within 1e-12.
    pub fn probability(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = Self::new(atoms)?;
        m.require_probability()?;
        Ok(m)
    }

    /// Combines atoms that share a location by adding their weights.
    pub fn merging(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some((y, v)) if *y == x => *v += w,
                _ => merged.push((x, w)),
            }
        }
        Self::new(merged)
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn require_probability(&self) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(Error::NotProbability {
                mass: self.total_mass(),
            })
        }
    }

    /// `⟨g, μ⟩ = Σ_i g(x_i) w_i`.
    pub fn integrate(&self, g: &PolyFactor) -> f64 {
        self.atoms().map(|(x, w)| g.eval(x) * w).sum()
    }

    /// `μ + ε δ_x`.
    pub fn add_point_mass(&self, x: f64, eps: f64) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = self.atoms().collect();
        atoms.push((x, eps));
        Self::merging(atoms)
    }
}

/// `⟨φ, μ^k⟩` with the probability-measure precondition enforced when `strict`.
pub fn eval_moment(phi: &ProductTestFunction, mu: &AtomicMeasure, strict: bool) -> Result<f64> {
    if strict {
        phi.checked_moment(mu)
    } else {
        Ok(phi.moment(mu))
    }
}
