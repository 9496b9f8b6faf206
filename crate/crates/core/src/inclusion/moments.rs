//! Moments and sampling-partition laws of the stationary random measure
//! `W = Σ (n_i/N) δ_{x_i}`, exact by enumeration or by Monte Carlo.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::{enumerate_stationary, sample_stationary, InclusionModel, StationarySampler};
use crate::dirichlet::PartitionDistribution;
use crate::error::{Error, Result};
use crate::measures::ProductTestFunction;
use crate::partitions::{integer_partitions, set_partitions, Shape};
use crate::rng::stream_rng;

/// Largest sample size accepted by [`exact_partition_distribution_w`].
pub const MAX_EXACT_SAMPLE_SIZE: usize = 8;

/// `E⟨φ, W^k⟩` by summing over the enumerated stationary law.
pub fn exact_moment(model: &InclusionModel, phi: &ProductTestFunction, cap: u128) -> Result<f64> {
    Ok(enumerate_stationary(model, cap)?
        .iter()
        .map(|(c, p)| p * phi.moment(&model.measure(c)))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub replicas: u64,
}

impl MomentEstimate {
    /// Mean and standard error of the mean; values are summed in order so the
    /// result does not depend on how they were produced.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let var = if values.len() > 1 { ss / (n - 1.0) } else { 0.0 };
        MomentEstimate {
            estimate: mean,
            standard_error: (var / n).sqrt(),
            replicas: values.len() as u64,
        }
    }
}

/// Monte Carlo estimate of `E⟨φ, W^k⟩`. Replica `r` draws from
/// `stream_rng(master_seed, r)`, so the result is independent of `parallel`.
pub fn empirical_moment(
    model: &InclusionModel,
    phi: &ProductTestFunction,
    replicas: u64,
    master_seed: u64,
    sampler: StationarySampler,
    parallel: bool,
) -> Result<MomentEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    let one = |r: u64| -> Result<f64> {
        let mut rng = stream_rng(master_seed, r);
        let config = sample_stationary(model, sampler, &mut rng)?;
        Ok(phi.moment(&model.measure(&config)))
    };
    let values: Vec<f64> = if parallel {
        (0..replicas).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..replicas).map(one).collect::<Result<_>>()?
    };
    Ok(MomentEstimate::from_values(&values))
}

/// Draws a stationary configuration, then `n` i.i.d. labels from `W`, and
/// returns the shape of the induced partition.
pub fn sample_partition_from_w<R: Rng>(
    model: &InclusionModel,
    n: usize,
    sampler: StationarySampler,
    rng: &mut R,
) -> Result<Shape> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if model.particles() == 0 {
        return Err(Error::InvalidArgument("W is undefined without particles".into()));
    }
    let config = sample_stationary(model, sampler, rng)?;
    let particle_sites: Vec<usize> = config
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect();
    let mut groups: BTreeMap<usize, usize> = BTreeMap::new();
    for _ in 0..n {
        let site = particle_sites[rng.random_range(0..particle_sites.len())];
        *groups.entry(site).or_default() += 1;
    }
    Ok(Shape::from_blocks(groups.into_values().collect()))
}

/// Möbius expansion of `Σ_{distinct s_1..s_r} ∏_j W_{s_j}^{b_j}` in power sums
/// `p_m = Σ_i W_i^m`: a list of `(coefficient, exponents)` terms.
fn injection_expansion(blocks: &[usize]) -> Vec<(f64, Vec<usize>)> {
    set_partitions(blocks.len())
        .into_iter()
        .map(|sigma| {
            let mut coef = 1.0;
            let mut exps = Vec::with_capacity(sigma.len());
            for b in &sigma {
                let k = b.len();
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                coef *= sign * (1..k).map(|v| v as f64).product::<f64>();
                exps.push(b.iter().map(|&j| blocks[j]).sum());
            }
            (coef, exps)
        })
        .collect()
}

/// Exact law of the sampling partition shape `S_n(W)` under the enumerated
/// stationary law, for `n ≤ 8`.
pub fn exact_partition_distribution_w(
    model: &InclusionModel,
    n: usize,
    cap: u128,
) -> Result<PartitionDistribution> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if n > MAX_EXACT_SAMPLE_SIZE {
        return Err(Error::OrderCap {
            what: "exact sampling partition size",
            order: n,
            cap: MAX_EXACT_SAMPLE_SIZE,
        });
    }
    if model.particles() == 0 {
        return Err(Error::InvalidArgument("W is undefined without particles".into()));
    }
    let law = enumerate_stationary(model, cap)?;
    let shapes = integer_partitions(n);
    let expansions: Vec<Vec<(f64, Vec<usize>)>> =
        shapes.iter().map(|s| injection_expansion(s.blocks())).collect();
    let mut acc = vec![0.0; shapes.len()];
    let nf = f64::from(model.particles());
    for (config, p) in &law {
        let w: Vec<f64> = config
            .counts()
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| f64::from(c) / nf)
            .collect();
        let power: Vec<f64> = (0..=n)
            .map(|m| w.iter().map(|x| x.powi(m as i32)).sum())
            .collect();
        for (a, terms) in acc.iter_mut().zip(&expansions) {
            let inj: f64 = terms
                .iter()
                .map(|(c, exps)| c * exps.iter().map(|&e| power[e]).product::<f64>())
                .sum();
            *a += p * inj;
        }
    }
    let probs: BTreeMap<Shape, f64> = shapes
        .into_iter()
        .zip(acc)
        .map(|(s, v)| {
            let count = s.ln_set_partition_count().exp();
            // Möbius cancellation can leave -1e-17 for shapes with more blocks than occupied sites.
            (s, (v * count).max(0.0))
        })
        .collect();
    PartitionDistribution::new(n, probs)
}

/// Probability of one specific set partition (blocks of `{0..n}`) under
/// `S_n(W)`, by direct enumeration of injective site assignments.
pub fn set_partition_probability_w(
    model: &InclusionModel,
    blocks: &[Vec<usize>],
    cap: u128,
) -> Result<f64> {
    fn injections(w: &[f64], sizes: &[usize], used: &mut Vec<bool>) -> f64 {
        let Some((&b, rest)) = sizes.split_first() else {
            return 1.0;
        };
        let mut s = 0.0;
        for i in 0..w.len() {
            if used[i] || w[i] == 0.0 {
                continue;
            }
            used[i] = true;
            s += w[i].powi(b as i32) * injections(w, rest, used);
            used[i] = false;
        }
        s
    }
    let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let law = enumerate_stationary(model, cap)?;
    let nf = f64::from(model.particles());
    Ok(law
        .iter()
        .map(|(c, p)| {
            let w: Vec<f64> = c.counts().iter().map(|&x| f64::from(x) / nf).collect();
            p * injections(&w, &sizes, &mut vec![false; w.len()])
        })
        .sum())
}
