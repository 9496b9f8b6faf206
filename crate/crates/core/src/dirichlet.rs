//! The Dirichlet process `DP(θ, U[0,1])` and its exchangeable partition
//! structure: GEM stick-breaking, the Chinese restaurant process, the Ewens
//! sampling formula and exact moments `E⟨φ, Z^k⟩` by set-partition sums.

use std::collections::BTreeMap;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, PolyFactor, ProductTestFunction};
use crate::partitions::{integer_partitions, ln_factorial, ln_rising, set_partitions, Shape};

pub const DEFAULT_TRUNCATION: f64 = 1e-10;
/// Largest `n` for [`esf_distribution`].
pub const MAX_ESF_N: usize = 30;
/// Largest `k` for [`dp_moment_partition_sum`] (Bell(10) = 115975 terms).
pub const MAX_PARTITION_SUM_ORDER: usize = 10;

const SUM_TOL: f64 = 1e-12;

/// Stick-breaking weights `P_i = V_i ∏_{j<i}(1 − V_j)`, `V_j ~ Beta(1, θ)`,
/// truncated once the unbroken remainder drops below `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct GemSample {
    pub weights: Vec<f64>,
    pub residual: f64,
}

pub fn sample_gem<R: Rng + ?Sized>(theta: f64, eps: f64, rng: &mut R) -> Result<GemSample> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("truncation must lie in (0,1), got {eps}")));
    }
    let mut weights = Vec::new();
    let mut residual = 1.0;
    while residual >= eps {
        // 1 − V ~ Beta(θ, 1) = U^{1/θ}
        let u: f64 = rng.sample(Open01);
        let keep = u.powf(1.0 / theta);
        let w = residual * (1.0 - keep);
        if w <= 0.0 {
            continue;
        }
        weights.push(w);
        residual -= w;
    }
    Ok(GemSample { weights, residual })
}

/// Draw from `DP(θ, U[0,1])`: GEM weights on i.i.d. uniform labels, with the
/// truncation residual placed on one extra uniform atom.
pub fn sample_dp<R: Rng + ?Sized>(theta: f64, eps: f64, rng: &mut R) -> Result<AtomicMeasure> {
    let gem = sample_gem(theta, eps, rng)?;
    let mut atoms: Vec<(f64, f64)> = gem
        .weights
        .iter()
        .map(|&w| (rng.random::<f64>(), w))
        .collect();
    if gem.residual > 0.0 {
        atoms.push((rng.random::<f64>(), gem.residual));
    }
    AtomicMeasure::merging(atoms)
}

/// Chinese restaurant process with concentration `θ`; returns the shape.
pub fn crp_sample<R: Rng + ?Sized>(theta: f64, n: usize, rng: &mut R) -> Result<Shape> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one customer".into()));
    }
    let mut tables: Vec<usize> = Vec::new();
    for t in 0..n {
        // customer t+1 sees t seated customers
        let u = rng.random::<f64>() * (t as f64 + theta);
        if u >= t as f64 {
            tables.push(1);
            continue;
        }
        let mut acc = 0.0;
        let mut chosen = tables.len() - 1;
        for (i, &s) in tables.iter().enumerate() {
            acc += s as f64;
            if u < acc {
                chosen = i;
                break;
            }
        }
        tables[chosen] += 1;
    }
    Ok(Shape::from_blocks(tables))
}

/// A probability law over integer partitions of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionDistributionRepr", into = "PartitionDistributionRepr")]
pub struct PartitionDistribution {
    n: usize,
    probs: BTreeMap<Shape, f64>,
}

#[derive(Serialize, Deserialize)]
struct PartitionDistributionRepr {
    n: usize,
    probs: BTreeMap<String, f64>,
}

impl TryFrom<PartitionDistributionRepr> for PartitionDistribution {
    type Error = Error;

    fn try_from(r: PartitionDistributionRepr) -> Result<Self> {
        let probs = r
            .probs
            .into_iter()
            .map(|(k, v)| Ok((k.parse::<Shape>()?, v)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        PartitionDistribution::new(r.n, probs)
    }
}

impl From<PartitionDistribution> for PartitionDistributionRepr {
    fn from(d: PartitionDistribution) -> Self {
        PartitionDistributionRepr {
            n: d.n,
            probs: d.probs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl PartitionDistribution {
    /// Validates that every key partitions `n`, probabilities are
    /// non-negative and they sum to 1 within 1e-12.
    pub fn new(n: usize, probs: impl IntoIterator<Item = (Shape, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (s, p) in probs {
            if s.n() != n {
                return Err(Error::InvalidArgument(format!("shape {s} does not partition {n}")));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!("probability {p} for shape {s}")));
            }
            *map.entry(s).or_insert(0.0) += p;
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "partition probabilities sum to {total}"
            )));
        }
        Ok(PartitionDistribution { n, probs: map })
    }

    /// Empirical law from shape counts; no normalisation tolerance applies.
    pub fn from_counts(n: usize, counts: &BTreeMap<Shape, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("no observations".into()));
        }
        let mut probs = BTreeMap::new();
        for (s, &c) in counts {
            if s.n() != n {
                return Err(Error::InvalidArgument(format!("shape {s} does not partition {n}")));
            }
            probs.insert(s.clone(), c as f64 / total as f64);
        }
        Ok(PartitionDistribution { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prob(&self, shape: &Shape) -> f64 {
        self.probs.get(shape).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Shape, f64)> {
        self.probs.iter().map(|(s, &p)| (s, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// `ln P_ESF(ρ)` for one set partition with the given block sizes:
/// `θ^b ∏ (|B|−1)! / θ^{(n)}`.
pub fn esf_ln_set_partition_prob(theta: f64, block_sizes: &[usize]) -> f64 {
    let n: usize = block_sizes.iter().sum();
    block_sizes.len() as f64 * theta.ln()
        + block_sizes.iter().map(|&s| ln_factorial(s - 1)).sum::<f64>()
        - ln_rising(theta, n)
}

/// Ewens sampling formula over shapes:
/// `n! / (∏_s s^{m_s} m_s!) · θ^b / θ^{(n)}`.
pub fn esf_distribution(theta: f64, n: usize) -> Result<PartitionDistribution> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if n > MAX_ESF_N {
        return Err(Error::OrderCap {
            what: "Ewens sampling formula n",
            order: n,
            cap: MAX_ESF_N,
        });
    }
    let probs = integer_partitions(n).into_iter().map(|s| {
        let mut lp = ln_factorial(n) + s.num_blocks() as f64 * theta.ln() - ln_rising(theta, n);
        for (size, mult) in s.multiplicities() {
            lp -= mult as f64 * (size as f64).ln() + ln_factorial(mult);
        }
        (s, lp.exp())
    });
    PartitionDistribution::new(n, probs)
}

/// `E⟨φ, Z^k⟩` for `Z ~ DP(θ, U[0,1])`:
/// `Σ_ρ P_ESF(ρ) ∏_{B∈ρ} ∫₀¹ ∏_{j∈B} g_j(x) dx` over set partitions of `{1..k}`.
pub fn dp_moment_partition_sum(theta: f64, phi: &ProductTestFunction) -> Result<f64> {
    let k = phi.k();
    if k > MAX_PARTITION_SUM_ORDER {
        return Err(Error::OrderCap {
            what: "partition-sum moment order",
            order: k,
            cap: MAX_PARTITION_SUM_ORDER,
        });
    }
    let mut total = 0.0;
    for rho in set_partitions(k) {
        let sizes: Vec<usize> = rho.iter().map(Vec::len).collect();
        let weight = esf_ln_set_partition_prob(theta, &sizes).exp();
        let integral: f64 = rho
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|&j| phi.factors()[j].clone())
                    .reduce(|a, b| a.mul(&b))
                    .unwrap_or_else(PolyFactor::one)
                    .integrate_uniform()
            })
            .product();
        total += weight * integral;
    }
    Ok(total)
}

/// `½ Σ_λ |p(λ) − q(λ)|` over the union of supports.
pub fn tv_distance(p: &PartitionDistribution, q: &PartitionDistribution) -> Result<f64> {
    if p.n != q.n {
        return Err(Error::MismatchedN(p.n, q.n));
    }
    let mut sum = 0.0;
    for (s, &a) in &p.probs {
        sum += (a - q.prob(s)).abs();
    }
    for (s, &b) in &q.probs {
        if !p.probs.contains_key(s) {
            sum += b;
        }
    }
    Ok(0.5 * sum)
}

/// Total variation over full set partitions of `{0..n}`, given per-set-partition
/// probability functions. Used to confirm that collapsing to shapes is lossless.
pub fn set_partition_tv(
    n: usize,
    mut p: impl FnMut(&[Vec<usize>]) -> Result<f64>,
    mut q: impl FnMut(&[Vec<usize>]) -> Result<f64>,
) -> Result<f64> {
    let mut sum = 0.0;
    for rho in set_partitions(n) {
        sum += (p(&rho)? - q(&rho)?).abs();
    }
    Ok(0.5 * sum)
}
