//! Stationary law of the inclusion process.
//!
//! The product weights `∏_i Γ(θ/L + n_i) / (Γ(θ/L) n_i!)` satisfy detailed
//! balance with [`InclusionModel::jump_rate`]; normalised over compositions of
//! `N` this is the Dirichlet-multinomial law with parameters `(θ/L, …, θ/L)`.
//! Everything here is checked against the generator directly rather than
//! taken on trust: see [`detailed_balance_violation`] and
//! [`generator_null_vector`].

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{Budget, InclusionModel, ParticleConfiguration, Simulator};
use crate::error::{Error, Result};
use crate::measures::ProductTestFunction;
use crate::partitions::{composition_count, for_each_composition, ln_factorial};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;
pub const DEFAULT_ATTEMPT_CAP: u64 = 10_000_000;

/// `Σ_i [ln Γ(θ/L + n_i) − ln Γ(θ/L) − ln n_i!]`, the unnormalised log
/// stationary weight.
pub fn stationary_log_weight(model: &InclusionModel, config: &ParticleConfiguration) -> f64 {
    let d = model.site_param();
    let lg_d = ln_gamma(d);
    config
        .counts()
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| ln_gamma(d + f64::from(n)) - lg_d - ln_factorial(n as usize))
        .sum()
}

fn check_enumerable(model: &InclusionModel, cap: u128) -> Result<u128> {
    let count = composition_count(model.particles(), model.sites());
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    Ok(count)
}

/// All configurations with their normalised stationary probabilities.
pub fn enumerate_stationary(
    model: &InclusionModel,
    cap: u128,
) -> Result<Vec<(ParticleConfiguration, f64)>> {
    let count = check_enumerable(model, cap)?;
    let mut out = Vec::with_capacity(count as usize);
    for_each_composition(model.particles(), model.sites(), |c| {
        let config = ParticleConfiguration::new(c.to_vec());
        let lw = stationary_log_weight(model, &config);
        out.push((config, lw));
    });
    let max = out.iter().map(|(_, lw)| *lw).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = out.iter().map(|(_, lw)| (lw - max).exp()).sum();
    for (_, w) in out.iter_mut() {
        *w = (*w - max).exp() / z;
    }
    Ok(out)
}

/// Dense generator matrix over the enumerated configurations (row = from).
pub fn generator_matrix(
    model: &InclusionModel,
    cap: u128,
) -> Result<(Vec<ParticleConfiguration>, DMatrix<f64>)> {
    check_enumerable(model, cap)?;
    let mut configs = Vec::new();
    for_each_composition(model.particles(), model.sites(), |c| {
        configs.push(ParticleConfiguration::new(c.to_vec()));
    });
    let index: HashMap<&ParticleConfiguration, usize> =
        configs.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = configs.len();
    let mut q = DMatrix::zeros(n, n);
    for (a, config) in configs.iter().enumerate() {
        for i in 0..model.sites() {
            for j in 0..model.sites() {
                let rate = model.jump_rate(config, i, j)?;
                if rate == 0.0 {
                    continue;
                }
                let to = config.moved(i, j).expect("positive rate needs a particle");
                let b = index[&to];
                q[(a, b)] += rate;
                q[(a, a)] -= rate;
            }
        }
    }
    Ok((configs, q))
}

/// Stationary vector from a linear solve of `πQ = 0`, `Σπ = 1`.
pub fn generator_null_vector(
    model: &InclusionModel,
    cap: u128,
) -> Result<Vec<(ParticleConfiguration, f64)>> {
    let (configs, q) = generator_matrix(model, cap)?;
    let n = configs.len();
    let mut a = q.transpose();
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("singular generator system".into()))?;
    Ok(configs.into_iter().zip(pi.iter().copied()).collect())
}

/// Largest relative detailed-balance violation
/// `|w(n)q(n→n′) − w(n′)q(n′→n)| / max(…)` over every single-particle move,
/// using the supplied log weight.
pub fn detailed_balance_violation(
    model: &InclusionModel,
    cap: u128,
    log_weight: impl Fn(&ParticleConfiguration) -> f64,
) -> Result<f64> {
    check_enumerable(model, cap)?;
    let mut worst: f64 = 0.0;
    let mut err = None;
    for_each_composition(model.particles(), model.sites(), |c| {
        if err.is_some() {
            return;
        }
        let config = ParticleConfiguration::new(c.to_vec());
        let w = log_weight(&config);
        for i in 0..model.sites() {
            for j in 0..model.sites() {
                if i == j {
                    continue;
                }
                let Some(to) = config.moved(i, j) else { continue };
                let (fwd, back) = match (model.jump_rate(&config, i, j), model.jump_rate(&to, j, i)) {
                    (Ok(f), Ok(b)) => (f, b),
                    (Err(e), _) | (_, Err(e)) => {
                        err = Some(e);
                        return;
                    }
                };
                let lhs = (w + fwd.ln()).exp();
                let rhs = (log_weight(&to) + back.ln()).exp();
                let scale = lhs.abs().max(rhs.abs());
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(worst),
    }
}

/// `Σ_n π(n) (A₁f)(n)` for `f(n) = ⟨φ, W(n)^k⟩`; zero at stationarity.
pub fn generator_expectation(
    model: &InclusionModel,
    phi: &ProductTestFunction,
    cap: u128,
) -> Result<f64> {
    let law = enumerate_stationary(model, cap)?;
    let mut total = 0.0;
    for (config, p) in &law {
        let f0 = phi.moment(&model.measure(config));
        let mut af = 0.0;
        for i in 0..model.sites() {
            for j in 0..model.sites() {
                let rate = model.jump_rate(config, i, j)?;
                if rate > 0.0 {
                    let to = config.moved(i, j).expect("positive rate needs a particle");
                    af += rate * (phi.moment(&model.measure(&to)) - f0);
                }
            }
        }
        total += p * af;
    }
    Ok(total)
}

/// Exact stationary draw by rejection: independent negative-binomial
/// `(θ/L, p)` site counts with `p = N/(N+θ)` (mean total `N`), accepted when
/// they sum to `N`.
pub fn sample_stationary_exact<R: Rng + ?Sized>(
    model: &InclusionModel,
    rng: &mut R,
    attempt_cap: u64,
) -> Result<ParticleConfiguration> {
    let n = model.particles();
    let l = model.sites();
    if n == 0 {
        return Ok(ParticleConfiguration::new(vec![0; l]));
    }
    // NB(r, p) as a Gamma(r, p/(1-p)) mixture of Poissons; p/(1-p) = N/θ.
    let gamma = Gamma::new(model.site_param(), f64::from(n) / model.theta())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut counts = vec![0u32; l];
    for attempt in 1..=attempt_cap {
        let mut total: u64 = 0;
        let mut ok = true;
        for c in counts.iter_mut() {
            let lambda: f64 = gamma.sample(rng);
            let draw = if lambda > 0.0 {
                Poisson::new(lambda)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            total += draw as u64;
            if total > u64::from(n) {
                ok = false;
                break;
            }
            *c = draw as u32;
        }
        if ok && total == u64::from(n) {
            return Ok(ParticleConfiguration::new(counts));
        }
        if attempt == attempt_cap {
            break;
        }
    }
    Err(Error::AttemptsExhausted {
        attempts: attempt_cap,
        acceptance_rate: acceptance_probability(model),
    })
}

/// Probability that one rejection attempt succeeds:
/// `P(NB(θ, p) = N) = Γ(θ+N)/(Γ(θ) N!) p^N (1−p)^θ`.
fn acceptance_probability(model: &InclusionModel) -> f64 {
    let n = f64::from(model.particles());
    let t = model.theta();
    let p = n / (n + t);
    (ln_gamma(t + n) - ln_gamma(t) - ln_gamma(n + 1.0) + n * p.ln() + t * (1.0 - p).ln()).exp()
}

/// Exact stationary draw by a Pólya urn: particle `t+1` joins site `j` with
/// probability `(n_j + θ/L)/(t + θ)`. `O(N)` per draw.
pub fn sample_stationary_polya<R: Rng + ?Sized>(
    model: &InclusionModel,
    rng: &mut R,
) -> ParticleConfiguration {
    let l = model.sites();
    let theta = model.theta();
    let mut counts = vec![0u32; l];
    let mut placed: Vec<u32> = Vec::with_capacity(model.particles() as usize);
    for t in 0..model.particles() {
        let tf = f64::from(t);
        // (n_j + θ/L)/(t+θ) = [t/(t+θ)]·(n_j/t) + [θ/(t+θ)]·(1/L)
        let site = if rng.random::<f64>() * (tf + theta) < tf {
            placed[rng.random_range(0..placed.len())]
        } else {
            rng.random_range(0..l) as u32
        };
        counts[site as usize] += 1;
        placed.push(site);
    }
    ParticleConfiguration::new(counts)
}

pub fn default_burn_in(model: &InclusionModel) -> u64 {
    20 * u64::from(model.particles()) * model.sites() as u64
}

/// Runs the simulator from the balanced configuration for the fixed time
/// `burn_in / R`, with `R` the largest total jump rate (attained at the
/// balanced configuration), and returns the configuration at that time.
/// At most about `burn_in` events occur. The horizon is fixed because the
/// state after a fixed number of events follows the jump chain, whose
/// stationary law is tilted by the total rate.
pub fn sample_stationary_mcmc<R: Rng>(
    model: &InclusionModel,
    rng: &mut R,
    burn_in: u64,
) -> Result<ParticleConfiguration> {
    if burn_in == 0 {
        return Err(Error::InvalidArgument("burn-in must be at least one event".into()));
    }
    if model.particles() == 0 || model.sites() == 1 {
        return Ok(model.balanced());
    }
    let start = model.balanced();
    let horizon = burn_in as f64 / model.total_rate(&start);
    let mut sim = Simulator::new(*model, start, rng)?;
    sim.run(Budget::Time(horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationarySampler {
    /// Negative-binomial rejection.
    Rejection { attempt_cap: u64 },
    /// Pólya urn (Dirichlet-multinomial), exact and `O(N)`.
    Polya,
    /// Simulator burn-in from the balanced start.
    Mcmc { burn_in: u64 },
}

impl StationarySampler {
    pub fn mcmc_default(model: &InclusionModel) -> Self {
        StationarySampler::Mcmc {
            burn_in: default_burn_in(model),
        }
    }
}

pub fn sample_stationary<R: Rng>(
    model: &InclusionModel,
    sampler: StationarySampler,
    rng: &mut R,
) -> Result<ParticleConfiguration> {
    match sampler {
        StationarySampler::Rejection { attempt_cap } => sample_stationary_exact(model, rng, attempt_cap),
        StationarySampler::Polya => Ok(sample_stationary_polya(model, rng)),
        StationarySampler::Mcmc { burn_in } => sample_stationary_mcmc(model, rng, burn_in),
    }
}
