use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_error, ExperimentConfig, Method, ResultRecord};
use crate::bounds::{partition_bound, moment_bound};
use crate::dirichlet::{dp_moment_partition_sum, esf_distribution, tv_distance, PartitionDistribution};
use crate::dual::{dp_moment_dual, MAX_DUAL_ORDER};
use crate::error::{Error, Result};
use crate::inclusion::{
    empirical_moment, exact_moment, exact_partition_distribution_w, sample_partition_from_w,
    Budget, InclusionModel, ParticleConfiguration, Simulator, TraceSink, DEFAULT_ENUMERATION_CAP,
};
use crate::partitions::Shape;
use crate::rng::{rng_from_seed, stream_rng};

const ORACLE_TOLERANCE: f64 = 1e-10;

/// `E⟨φ, Z^k⟩` by the dual recursion, cross-checked against the partition sum.
fn dp_moment_checked(theta: f64, phi: &crate::measures::ProductTestFunction) -> Result<(f64, f64)> {
    if phi.k() > MAX_DUAL_ORDER {
        return Err(Error::OrderCap {
            what: "moment-compare order",
            order: phi.k(),
            cap: MAX_DUAL_ORDER,
        });
    }
    let dual = dp_moment_dual(theta, phi)?;
    let sum = dp_moment_partition_sum(theta, phi)?;
    let gap = (dual - sum).abs();
    let scale = dual.abs().max(sum.abs()) + 1e-14 * phi.sup_norm_bound();
    if gap > ORACLE_TOLERANCE * scale {
        return Err(Error::OracleMismatch(format!(
            "dual recursion {dual} vs partition sum {sum} at theta {theta}"
        )));
    }
    Ok((dual, gap))
}

/// Compares `E⟨φ, W^k⟩` with `E⟨φ, Z^k⟩` and with the moment bound.
pub fn cmd_moment_compare(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let start = Instant::now();
    let phi = config.test_function()?;
    let model = &config.model;
    let (value_z, gap) = dp_moment_checked(model.theta(), phi)?;
    let (value_w, se) = match config.sampler() {
        None => (exact_moment(model, phi, DEFAULT_ENUMERATION_CAP)?, 0.0),
        Some(sampler) => {
            let e = empirical_moment(model, phi, config.replicas, config.seed, sampler, true)?;
            (e.estimate, e.standard_error)
        }
    };
    let estimate = (value_w - value_z).abs();
    let bound = moment_bound(model.particles(), model.sites(), model.theta(), phi.k(), phi.sup_norm_bound())?;
    let constant = phi.factors().iter().all(|g| g.is_constant());
    Ok(ResultRecord {
        experiment: "moment-compare".into(),
        config: config.clone(),
        estimate,
        standard_error: se,
        value_w: Some(value_w),
        value_z: Some(value_z),
        oracle_gap: Some(gap),
        cells: Vec::new(),
        pass: estimate <= bound.total + 3.0 * se,
        gated: phi.k() >= 2 || constant,
        bound,
        wall_clock_s: start.elapsed().as_secs_f64(),
        replica_seeds: config.replica_seeds(),
    })
}

/// Probability of one partition shape under both laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCell {
    pub shape: String,
    pub p_w: f64,
    /// Binomial standard error of `p_w`; zero for exact runs.
    pub se: f64,
    pub p_z: f64,
}

fn cells(w: &PartitionDistribution, z: &PartitionDistribution, replicas: Option<u64>) -> Vec<ShapeCell> {
    let mut shapes: Vec<&Shape> = w.iter().map(|(s, _)| s).chain(z.iter().map(|(s, _)| s)).collect();
    shapes.sort();
    shapes.dedup();
    shapes
        .into_iter()
        .map(|s| {
            let p = w.prob(s);
            ShapeCell {
                shape: s.to_string(),
                p_w: p,
                se: replicas.map_or(0.0, |r| (p * (1.0 - p) / r as f64).sqrt()),
                p_z: z.prob(s),
            }
        })
        .collect()
}

/// Total-variation distance between the partition laws of a size-`n` sample
/// from `W` and from `Z`, against the partition bound. Monte Carlo runs
/// report `½ Σ se` over shapes as the standard error.
pub fn cmd_partition_tv(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let start = Instant::now();
    let n = config
        .sample_size
        .ok_or_else(|| Error::InvalidArgument("config has no sample_size".into()))?;
    let model = &config.model;
    let z = esf_distribution(model.theta(), n)?;
    let (w, replicas) = match config.sampler() {
        None => (exact_partition_distribution_w(model, n, DEFAULT_ENUMERATION_CAP)?, None),
        Some(sampler) => {
            let shapes: Vec<Shape> = (0..config.replicas)
                .into_par_iter()
                .map(|r| sample_partition_from_w(model, n, sampler, &mut stream_rng(config.seed, r)))
                .collect::<Result<_>>()?;
            let mut counts: BTreeMap<Shape, u64> = BTreeMap::new();
            for s in shapes {
                *counts.entry(s).or_default() += 1;
            }
            (PartitionDistribution::from_counts(n, &counts)?, Some(config.replicas))
        }
    };
    let estimate = tv_distance(&w, &z)?;
    let cells = cells(&w, &z, replicas);
    let se = 0.5 * cells.iter().map(|c| c.se).sum::<f64>();
    let bound = partition_bound(model.particles(), model.sites(), model.theta(), n)?;
    Ok(ResultRecord {
        experiment: "partition-tv".into(),
        config: config.clone(),
        estimate,
        standard_error: se,
        value_w: None,
        value_z: None,
        oracle_gap: None,
        cells,
        pass: estimate <= bound.total + 3.0 * se,
        gated: true,
        bound,
        wall_clock_s: start.elapsed().as_secs_f64(),
        replica_seeds: config.replica_seeds(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub particles: u32,
    #[serde(rename = "L")]
    pub sites: usize,
    pub theta: f64,
    pub k: usize,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub bound_total: f64,
    pub bound_t1: f64,
    pub bound_t2: f64,
    pub bound_t3: f64,
    pub estimate_times_n: f64,
    pub bound_times_n: f64,
    pub pass: bool,
}

/// Runs the moment comparison at each `N` with `L = round(N/θ)` (at least 1),
/// in increasing order of `N`.
pub fn cmd_sweep(base: &ExperimentConfig, ns: &[u32]) -> Result<Vec<SweepRow>> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("sweep needs a list of positive N".into()));
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let theta = base.model.theta();
    ns.into_iter()
        .map(|n| {
            let sites = ((f64::from(n) / theta).round() as usize).max(1);
            let config = ExperimentConfig {
                model: InclusionModel::new(n, sites, theta)?,
                ..base.clone()
            };
            let r = cmd_moment_compare(&config)?;
            let nf = f64::from(n);
            Ok(SweepRow {
                particles: n,
                sites,
                theta,
                k: r.order(),
                method: config.method,
                estimate: r.estimate,
                se: r.standard_error,
                bound_total: r.bound.total,
                bound_t1: r.bound.term_riemann,
                bound_t2: r.bound.term_mutation,
                bound_t3: r.bound.term_third,
                estimate_times_n: r.estimate * nf,
                bound_times_n: r.bound.total * nf,
                pass: r.pass,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub events: u64,
    pub time: f64,
    pub final_configuration: ParticleConfiguration,
    pub events_per_second: f64,
}

/// Runs the simulator for `events` jumps from the balanced configuration,
/// seeded by `config.seed`, optionally writing every event to a CSV trace.
pub fn cmd_simulate(config: &ExperimentConfig, events: u64, trace: Option<&Path>) -> Result<SimulationSummary> {
    config.validate()?;
    let model = config.model;
    let mut sim = Simulator::new(model, model.balanced(), rng_from_seed(config.seed))?;
    let start = Instant::now();
    let final_configuration = match trace {
        Some(path) => {
            let mut sink = TraceSink::new(BufWriter::new(File::create(path)?))?;
            let c = sim.run_traced(Budget::Events(events), &mut sink)?;
            std::io::Write::flush(&mut sink.into_inner())?;
            c
        }
        None => sim.run(Budget::Events(events))?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(SimulationSummary {
        events: sim.events(),
        time: sim.time(),
        final_configuration,
        events_per_second: sim.events() as f64 / elapsed.max(1e-9),
    })
}
