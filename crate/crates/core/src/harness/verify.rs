//! Invariant suites run by `verify`. Each random case draws from its own
//! stream `stream_rng(seed, case)`, and the first violating case of a suite is
//! kept as JSON so it can be replayed.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::probes::{random_probability, random_test_function, stein_factor_probe};
use crate::dirichlet::{
    dp_moment_partition_sum, esf_distribution, esf_ln_set_partition_prob, set_partition_tv, tv_distance,
};
use crate::dual::{dp_moment_dual, stein_residuals_of, SteinSolution};
use crate::error::{Error, Result};
use crate::inclusion::{
    detailed_balance_violation, exact_partition_distribution_w, generator_expectation, generator_null_vector,
    set_partition_probability_w, stationary_log_weight, InclusionModel, ParticleConfiguration,
    DEFAULT_ENUMERATION_CAP,
};
use crate::measures::ProductTestFunction;
use crate::partitions::for_each_composition;
use crate::rng::stream_rng;

pub const SUITE_NAMES: [&str; 7] = [
    "detailed-balance",
    "null-vector",
    "generator-stationarity",
    "moment-oracle",
    "set-partition-collapse",
    "stein-residual",
    "stein-factors",
];

pub const DEFAULT_VERIFY_SEED: u64 = 0x5eed;

/// Deliberate corruption used to check that the suites catch errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Inflates the stationary weight of the all-on-site-0 configuration by 1%.
    CorruptStationaryWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Runs only suites whose name contains this string.
    pub suite: Option<String>,
    pub fault: Option<Fault>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            suite: None,
            fault: None,
            seed: DEFAULT_VERIFY_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: u64,
    /// Largest observed error (or bound excess for `stein-factors`).
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// First violating case.
    pub failure: Option<Value>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> Vec<&SuiteReport> {
        self.suites.iter().filter(|s| !s.pass).collect()
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<24} {:>7} {:>12} {:>10} {:>8}  {}\n", "suite", "cases", "worst", "tolerance", "seconds", "status");
        for s in &self.suites {
            out.push_str(&format!(
                "{:<24} {:>7} {:>12.3e} {:>10.0e} {:>8.2}  {}\n",
                s.name,
                s.cases,
                s.worst,
                s.tolerance,
                s.seconds,
                if s.pass { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    cases: u64,
    worst: f64,
    failure: Option<Value>,
    start: Instant,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tracker {
            name,
            tolerance,
            cases: 0,
            worst: 0.0,
            failure: None,
            start: Instant::now(),
        }
    }

    fn observe(&mut self, error: f64, case: impl FnOnce() -> Value) {
        self.cases += 1;
        if error.is_nan() || error > self.worst {
            self.worst = if error.is_nan() { f64::INFINITY } else { error };
        }
        if (error.is_nan() || error > self.tolerance) && self.failure.is_none() {
            let mut v = case();
            v["error"] = json!(error);
            self.failure = Some(v);
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name.to_string(),
            cases: self.cases,
            worst: self.worst,
            tolerance: self.tolerance,
            pass: self.failure.is_none(),
            failure: self.failure,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn stationary_models() -> Vec<InclusionModel> {
    [(2, 2, 1.0), (3, 2, 2.0), (3, 3, 1.5), (4, 3, 0.7)]
        .into_iter()
        .map(|(n, l, t)| InclusionModel::new(n, l, t).expect("valid model"))
        .collect()
}

fn log_weight_fn(model: InclusionModel, fault: Option<Fault>) -> impl Fn(&ParticleConfiguration) -> f64 {
    move |c: &ParticleConfiguration| {
        let base = stationary_log_weight(&model, c);
        match fault {
            Some(Fault::CorruptStationaryWeight) if c.counts()[0] == model.particles() => base + 0.01f64.ln_1p(),
            _ => base,
        }
    }
}

fn model_json(m: &InclusionModel) -> Value {
    serde_json::to_value(m).expect("model serialises")
}

fn suite_detailed_balance(fault: Option<Fault>) -> Result<SuiteReport> {
    let mut t = Tracker::new("detailed-balance", 1e-10);
    for m in stationary_models() {
        let v = detailed_balance_violation(&m, DEFAULT_ENUMERATION_CAP, log_weight_fn(m, fault))?;
        t.observe(v, || json!({ "model": model_json(&m) }));
    }
    Ok(t.finish())
}

fn suite_null_vector(fault: Option<Fault>) -> Result<SuiteReport> {
    let mut t = Tracker::new("null-vector", 1e-10);
    for m in stationary_models() {
        let lw = log_weight_fn(m, fault);
        let mut weights = Vec::new();
        for_each_composition(m.particles(), m.sites(), |c| {
            weights.push(lw(&ParticleConfiguration::new(c.to_vec())).exp());
        });
        let z: f64 = weights.iter().sum();
        let null = generator_null_vector(&m, DEFAULT_ENUMERATION_CAP)?;
        for ((config, p), w) in null.iter().zip(&weights) {
            let err = (p - w / z).abs();
            t.observe(err, || {
                json!({ "model": model_json(&m), "configuration": config, "null_vector": p, "product_form": w / z })
            });
        }
    }
    Ok(t.finish())
}

fn suite_generator_stationarity(seed: u64) -> Result<SuiteReport> {
    let mut t = Tracker::new("generator-stationarity", 1e-10);
    let mut case = 0;
    for m in stationary_models() {
        for _ in 0..5 {
            let mut rng = stream_rng(seed ^ 0x6e6e, case);
            let k = rng.random_range(1..=3);
            let phi = random_test_function(&mut rng, k, 3);
            let v = generator_expectation(&m, &phi, DEFAULT_ENUMERATION_CAP)?;
            let n = f64::from(m.particles());
            let scale = (n * n + m.theta() * n) * phi.sup_norm_bound();
            t.observe(v.abs() / scale, || json!({ "model": model_json(&m), "case": case, "phi": phi }));
            case += 1;
        }
    }
    Ok(t.finish())
}

fn suite_moment_oracle(seed: u64) -> Result<SuiteReport> {
    let mut t = Tracker::new("moment-oracle", 1e-10);
    let xy = ProductTestFunction::monomial_product(&[1, 1])?;
    let v = dp_moment_dual(1.0, &xy)?;
    t.observe((v - 7.0 / 24.0).abs() * 24.0 / 7.0, || json!({ "theta": 1.0, "phi": xy, "dual": v }));
    let mut case = 0;
    for theta in [0.5, 1.0, 2.0] {
        for _ in 0..50 {
            let mut rng = stream_rng(seed ^ 0x0a0c, case);
            let k = rng.random_range(1..=5);
            let phi = random_test_function(&mut rng, k, 3);
            let a = dp_moment_dual(theta, &phi)?;
            let b = dp_moment_partition_sum(theta, &phi)?;
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            t.observe((a - b).abs() / scale, || {
                json!({ "theta": theta, "case": case, "phi": phi, "dual": a, "partition_sum": b })
            });
            case += 1;
        }
    }
    Ok(t.finish())
}

fn suite_set_partition_collapse() -> Result<SuiteReport> {
    let mut t = Tracker::new("set-partition-collapse", 1e-12);
    for (n_particles, l, theta) in [(2, 2, 1.0), (4, 3, 1.0), (6, 4, 0.5), (5, 5, 2.0)] {
        let m = InclusionModel::new(n_particles, l, theta)?;
        for n in 1..=4 {
            let shapes = tv_distance(
                &exact_partition_distribution_w(&m, n, DEFAULT_ENUMERATION_CAP)?,
                &esf_distribution(theta, n)?,
            )?;
            let full = set_partition_tv(
                n,
                |rho| set_partition_probability_w(&m, rho, DEFAULT_ENUMERATION_CAP),
                |rho| {
                    let sizes: Vec<usize> = rho.iter().map(Vec::len).collect();
                    Ok(esf_ln_set_partition_prob(theta, &sizes).exp())
                },
            )?;
            t.observe((shapes - full).abs(), || {
                json!({ "model": model_json(&m), "n": n, "shape_tv": shapes, "set_partition_tv": full })
            });
        }
    }
    Ok(t.finish())
}

fn suite_stein_residual(seed: u64) -> Result<SuiteReport> {
    let mut t = Tracker::new("stein-residual", 1e-8);
    let mut case = 0;
    for theta in [0.5, 1.0, 2.0] {
        for _ in 0..200 {
            let mut rng = stream_rng(seed ^ 0x5e1d, case);
            let k = rng.random_range(1..=3);
            let phi = random_test_function(&mut rng, k, 3);
            let mu = random_probability(&mut rng, 6);
            let sol = SteinSolution::new(theta, &phi)?;
            let r = stein_residuals_of(&sol, &phi, &mu)?;
            t.observe(r.halved.abs(), || {
                json!({ "theta": theta, "case": case, "phi": phi, "mu": mu, "residual": r.halved })
            });
            case += 1;
        }
    }
    Ok(t.finish())
}

fn suite_stein_factors(seed: u64) -> Result<SuiteReport> {
    let mut t = Tracker::new("stein-factors", 1e-9);
    for case in 0..2_000 {
        let mut rng = stream_rng(seed ^ 0x5f5f, case);
        let (excess, mut v) = stein_factor_probe(&mut rng)?;
        t.observe(excess.max(0.0), || {
            v["case"] = json!(case);
            v
        });
    }
    Ok(t.finish())
}

/// Runs the selected suites. Fails with a usage error when the filter
/// matches no suite.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let selected: Vec<&str> = SUITE_NAMES
        .iter()
        .copied()
        .filter(|n| opts.suite.as_deref().is_none_or(|f| n.contains(f)))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no suite matches {:?}; suites are {}",
            opts.suite.as_deref().unwrap_or(""),
            SUITE_NAMES.join(", ")
        )));
    }
    let suites = selected
        .into_iter()
        .map(|name| match name {
            "detailed-balance" => suite_detailed_balance(opts.fault),
            "null-vector" => suite_null_vector(opts.fault),
            "generator-stationarity" => suite_generator_stationarity(opts.seed),
            "moment-oracle" => suite_moment_oracle(opts.seed),
            "set-partition-collapse" => suite_set_partition_collapse(),
            "stein-residual" => suite_stein_residual(opts.seed),
            "stein-factors" => suite_stein_factors(opts.seed),
            _ => unreachable!("suite names are fixed"),
        })
        .collect::<Result<_>>()?;
    Ok(VerifyReport { seed: opts.seed, suites })
}
