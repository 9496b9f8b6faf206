//! Config-driven experiments, result persistence and verification suites.

mod experiments;
pub mod probes;
mod verify;

pub use experiments::{
    cmd_moment_compare, cmd_partition_tv, cmd_simulate, cmd_sweep, write_sweep_csv, ShapeCell,
    SimulationSummary, SweepRow,
};
pub use verify::{cmd_verify, Fault, SuiteReport, VerifyOptions, VerifyReport, SUITE_NAMES};

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundBreakdown;
use crate::error::{Error, Result};
use crate::inclusion::{
    default_burn_in, InclusionModel, StationarySampler, DEFAULT_ATTEMPT_CAP, DEFAULT_ENUMERATION_CAP,
};
use crate::measures::ProductTestFunction;
use crate::partitions::composition_count;
use crate::rng::mix_seed;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULT_JSON: &str = "result.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Enumerate the stationary law.
    Exact,
    /// Negative-binomial rejection sampling.
    Rejection,
    /// Pólya-urn sampling, exact in law.
    Polya,
    /// Simulator burn-in.
    Mcmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Rejection => "rejection",
            Method::Polya => "polya",
            Method::Mcmc => "mcmc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: InclusionModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<ProductTestFunction>,
    pub method: Method,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_events: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_replicas() -> u64 {
    10_000
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Re-checks the model and the method-specific fields. Exact runs are
    /// rejected up front, with the configuration count, when enumeration is
    /// infeasible.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        InclusionModel::new(m.particles(), m.sites(), m.theta())?;
        if m.particles() == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        match self.method {
            Method::Exact => {
                let count = composition_count(m.particles(), m.sites());
                if count > DEFAULT_ENUMERATION_CAP {
                    return Err(Error::TooLarge {
                        count,
                        cap: DEFAULT_ENUMERATION_CAP,
                    });
                }
            }
            _ => {
                if self.replicas < 2 {
                    return Err(Error::InvalidArgument("Monte Carlo needs at least two replicas".into()));
                }
            }
        }
        if self.burn_in_events == Some(0) {
            return Err(Error::InvalidArgument("burn_in_events must be positive".into()));
        }
        if self.sample_size == Some(0) {
            return Err(Error::InvalidArgument("sample_size must be positive".into()));
        }
        Ok(())
    }

    /// Sampler for Monte Carlo methods; `None` for exact enumeration.
    pub fn sampler(&self) -> Option<StationarySampler> {
        match self.method {
            Method::Exact => None,
            Method::Rejection => Some(StationarySampler::Rejection {
                attempt_cap: DEFAULT_ATTEMPT_CAP,
            }),
            Method::Polya => Some(StationarySampler::Polya),
            Method::Mcmc => Some(StationarySampler::Mcmc {
                burn_in: self.burn_in_events.unwrap_or_else(|| default_burn_in(&self.model)),
            }),
        }
    }

    pub fn replica_seeds(&self) -> Vec<u64> {
        match self.method {
            Method::Exact => Vec::new(),
            _ => (0..self.replicas).map(|r| mix_seed(self.seed, r)).collect(),
        }
    }

    pub fn test_function(&self) -> Result<&ProductTestFunction> {
        self.test_function
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("config has no test_function".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// `moment-compare` or `partition-tv`.
    pub experiment: String,
    pub config: ExperimentConfig,
    /// `|E h(W) − E h(Z)|` or the total-variation distance.
    pub estimate: f64,
    /// Zero for exact runs.
    pub standard_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_z: Option<f64>,
    /// `|dual − partition sum|` for `E h(Z)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<ShapeCell>,
    pub bound: BoundBreakdown,
    /// `estimate ≤ bound.total + 3·standard_error`.
    pub pass: bool,
    /// False when the bound is not expected to hold: first moments of
    /// non-constant φ, where every bound term vanishes but the lattice
    /// discretisation error does not.
    pub gated: bool,
    pub wall_clock_s: f64,
    pub replica_seeds: Vec<u64>,
}

impl ResultRecord {
    pub fn order(&self) -> usize {
        self.bound.order
    }

    /// Succeeds unless a gated comparison failed.
    pub fn ok(&self) -> bool {
        self.pass || !self.gated
    }

    /// Copy with the wall-clock time cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        ResultRecord {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            particles: self.bound.particles,
            sites: self.bound.sites,
            theta: self.bound.theta,
            k_or_n: self.bound.order,
            method: self.config.method,
            estimate: self.estimate,
            se: self.standard_error,
            bound_total: self.bound.total,
            bound_t1: self.bound.term_riemann,
            bound_t2: self.bound.term_mutation,
            bound_t3: self.bound.term_third,
            pass: self.pass,
            seed: self.config.seed,
        }
    }

    /// Writes `result.json` and appends a row to `results.csv` in `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RESULT_JSON), self.to_json())?;
        append_csv_row(&dir.join(RESULTS_CSV), &self.csv_row())
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    #[serde(rename = "N")]
    pub particles: u32,
    #[serde(rename = "L")]
    pub sites: usize,
    pub theta: f64,
    pub k_or_n: usize,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub bound_total: f64,
    pub bound_t1: f64,
    pub bound_t2: f64,
    pub bound_t3: f64,
    pub pass: bool,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "N,L,theta,k_or_n,method,estimate,se,bound_total,bound_t1,bound_t2,bound_t3,pass,seed";

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Appends `row`, writing the header first when the file is new or empty.
pub fn append_csv_row(path: &Path, row: &CsvRow) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected results header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "seed": 7,
        "model": {"N": 6, "L": 4, "theta": 1.0},
        "test_function": {"k": 2, "factors": [[0, 1], [0, 1]]},
        "method": "exact"
    }"#;

    #[test]
    fn config_parses_and_validates() {
        let c = ExperimentConfig::from_json(CONFIG).unwrap();
        assert_eq!(c.model.particles(), 6);
        assert_eq!(c.replicas, 10_000);
        assert!(c.sampler().is_none());
        assert!(c.replica_seeds().is_empty());
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_theta = CONFIG.replace("\"theta\": 1.0", "\"theta\": -1.0");
        assert!(ExperimentConfig::from_json(&bad_theta).is_err());
        let unknown = CONFIG.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
        let big = CONFIG.replace("\"N\": 6, \"L\": 4", "\"N\": 60, \"L\": 40");
        match ExperimentConfig::from_json(&big) {
            Err(Error::TooLarge { count, .. }) => assert!(count > DEFAULT_ENUMERATION_CAP),
            other => panic!("{other:?}"),
        }
        let one_replica = CONFIG.replace("\"exact\"", "\"polya\", \"replicas\": 1");
        assert!(ExperimentConfig::from_json(&one_replica).is_err());
        let bad_method = CONFIG.replace("\"exact\"", "\"gibbs\"");
        assert!(ExperimentConfig::from_json(&bad_method).is_err());
    }

    #[test]
    fn replica_seeds_follow_the_mixer() {
        let c = ExperimentConfig::from_json(&CONFIG.replace("\"exact\"", "\"mcmc\", \"replicas\": 3")).unwrap();
        assert_eq!(c.replica_seeds(), vec![mix_seed(7, 0), mix_seed(7, 1), mix_seed(7, 2)]);
        match c.sampler() {
            Some(StationarySampler::Mcmc { burn_in }) => assert_eq!(burn_in, default_burn_in(&c.model)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_rows_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESULTS_CSV);
        let row = CsvRow {
            particles: 6,
            sites: 4,
            theta: 0.1,
            k_or_n: 2,
            method: Method::Polya,
            estimate: 1.0 / 3.0,
            se: 2e-17,
            bound_total: 0.125,
            bound_t1: 0.1,
            bound_t2: 0.025,
            bound_t3: 0.0,
            pass: true,
            seed: u64::MAX,
        };
        append_csv_row(&path, &row).unwrap();
        append_csv_row(&path, &CsvRow { pass: false, ..row }).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
        let rows = read_csv_rows(&path).unwrap();
        assert_eq!(rows, vec![row, CsvRow { pass: false, ..row }]);
    }
}
