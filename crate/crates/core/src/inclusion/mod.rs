//! The discrete inclusion process on the complete graph of `L` sites.
//!
//! `N` particles occupy sites `0..L`; site `i` sits at lattice location
//! `(i+1)/L`. A particle moves from site `i` to site `j ≠ i` at rate
//! `n_i (n_j + θ/L)`.

mod moments;
mod simulator;
mod stationary;

pub use moments::{
    empirical_moment, exact_moment, exact_partition_distribution_w, sample_partition_from_w,
    set_partition_probability_w, MomentEstimate, MAX_EXACT_SAMPLE_SIZE,
};
pub use simulator::{Budget, Event, Simulator, TraceSink, TRACE_HEADER};
pub use stationary::{
    detailed_balance_violation, enumerate_stationary, generator_expectation,
    generator_matrix, generator_null_vector, sample_stationary, sample_stationary_exact,
    default_burn_in, sample_stationary_mcmc, sample_stationary_polya, stationary_log_weight,
    StationarySampler,
    DEFAULT_ATTEMPT_CAP, DEFAULT_ENUMERATION_CAP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionModel {
    #[serde(rename = "N")]
    particles: u32,
    #[serde(rename = "L")]
    sites: usize,
    theta: f64,
}

impl InclusionModel {
    pub fn new(particles: u32, sites: usize, theta: f64) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidArgument("need at least one site".into()));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        Ok(InclusionModel {
            particles,
            sites,
            theta,
        })
    }

    pub fn particles(&self) -> u32 {
        self.particles
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Per-site inclusion parameter `θ/L`.
    pub fn site_param(&self) -> f64 {
        self.theta / self.sites as f64
    }

    pub fn location(&self, site: usize) -> f64 {
        (site + 1) as f64 / self.sites as f64
    }

    pub fn locations(&self) -> Vec<f64> {
        (0..self.sites).map(|i| self.location(i)).collect()
    }

    /// Total jump rate `N² − Σ n_i² + (θ/L)·N·(L−1)` out of `config`.
    pub fn total_rate(&self, config: &ParticleConfiguration) -> f64 {
        let n = f64::from(self.particles);
        let sq: f64 = config.counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
        n * n - sq + self.site_param() * n * (self.sites as f64 - 1.0)
    }

    /// Rate of moving one particle from `i` to `j`: `n_i (n_j + θ/L)`, zero
    /// when `i == j`.
    pub fn jump_rate(&self, config: &ParticleConfiguration, i: usize, j: usize) -> Result<f64> {
        for idx in [i, j] {
            if idx >= self.sites {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    len: self.sites,
                });
            }
        }
        if i == j {
            return Ok(0.0);
        }
        let ni = f64::from(config.counts[i]);
        let nj = f64::from(config.counts[j]);
        Ok(ni * (nj + self.site_param()))
    }

    /// All particles on site 0.
    pub fn concentrated(&self) -> ParticleConfiguration {
        let mut counts = vec![0; self.sites];
        counts[0] = self.particles;
        ParticleConfiguration { counts }
    }

    /// `N/L` particles per site, the remainder spread over the first sites.
    pub fn balanced(&self) -> ParticleConfiguration {
        let base = self.particles / self.sites as u32;
        let extra = (self.particles as usize) % self.sites;
        let counts = (0..self.sites)
            .map(|i| base + u32::from(i < extra))
            .collect();
        ParticleConfiguration { counts }
    }

    pub fn check(&self, config: &ParticleConfiguration) -> Result<()> {
        if config.counts.len() != self.sites {
            return Err(Error::InvalidArgument(format!(
                "configuration has {} sites, model has {}",
                config.counts.len(),
                self.sites
            )));
        }
        if config.total() != u64::from(self.particles) {
            return Err(Error::InvalidArgument(format!(
                "configuration holds {} particles, model has {}",
                config.total(),
                self.particles
            )));
        }
        Ok(())
    }

    /// The random measure `W = Σ (n_i/N) δ_{x_i}` for this configuration.
    /// Empty sites are dropped.
    pub fn measure(&self, config: &ParticleConfiguration) -> AtomicMeasure {
        let n = f64::from(self.particles);
        let atoms = config
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.location(i), f64::from(c) / n))
            .collect();
        AtomicMeasure::new(atoms).expect("lattice locations are distinct and in (0,1]")
    }
}

/// Occupation counts `n_1..n_L`. Serialises as a JSON array of counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticleConfiguration {
    counts: Vec<u32>,
}

impl ParticleConfiguration {
    pub fn new(counts: Vec<u32>) -> Self {
        ParticleConfiguration { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn sites(&self) -> usize {
        self.counts.len()
    }

    /// Configuration after one particle moves from `i` to `j`, or `None` when
    /// site `i` is empty.
    pub fn moved(&self, i: usize, j: usize) -> Option<Self> {
        if self.counts[i] == 0 {
            return None;
        }
        let mut counts = self.counts.clone();
        counts[i] -= 1;
        counts[j] += 1;
        Some(ParticleConfiguration { counts })
    }
}
