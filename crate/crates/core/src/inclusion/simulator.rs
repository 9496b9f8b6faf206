//! Event-driven (Gillespie) simulation of the inclusion process.
//!
//! Each event first picks the source site with probability proportional to
//! its row total `n_i (N − n_i + (L−1)θ/L)`, then the target among the other
//! sites proportional to `n_j + θ/L`. Both draws run on [`RateIndex`] trees,
//! so an event costs `O(log L)`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{InclusionModel, ParticleConfiguration};
use crate::error::{Error, Result};
use crate::rate_index::RateIndex;

pub const TRACE_HEADER: &str = "event_index,time,source_site,target_site";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// 1-based count of events so far.
    pub index: u64,
    /// Time at which the event fired.
    pub time: f64,
    /// Holding time spent in the pre-event configuration.
    pub dwell: f64,
    pub source: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Events(u64),
    /// Run until the next event would fire after this time.
    Time(f64),
}

/// Writes events as CSV rows `event_index,time,source_site,target_site`
/// (0-based sites).
pub struct TraceSink<W: Write> {
    out: W,
}

impl<W: Write> TraceSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(TraceSink { out })
    }

    pub fn record(&mut self, e: &Event) -> Result<()> {
        writeln!(self.out, "{},{},{},{}", e.index, e.time, e.source, e.target)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub struct Simulator<R> {
    model: InclusionModel,
    counts: Vec<u32>,
    sum_sq: u64,
    sources: RateIndex,
    targets: RateIndex,
    row_const: f64,
    time: f64,
    events: u64,
    rng: R,
}

impl<R: Rng> Simulator<R> {
    pub fn new(model: InclusionModel, start: ParticleConfiguration, rng: R) -> Result<Self> {
        model.check(&start)?;
        let d = model.site_param();
        let row_const = f64::from(model.particles()) + (model.sites() as f64 - 1.0) * d;
        let counts = start.counts().to_vec();
        let sources = RateIndex::new(
            counts
                .iter()
                .map(|&c| source_weight(c, row_const))
                .collect(),
        );
        let targets = RateIndex::new(counts.iter().map(|&c| f64::from(c) + d).collect());
        let sum_sq = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
        Ok(Simulator {
            model,
            counts,
            sum_sq,
            sources,
            targets,
            row_const,
            time: 0.0,
            events: 0,
            rng,
        })
    }

    pub fn model(&self) -> &InclusionModel {
        &self.model
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn configuration(&self) -> ParticleConfiguration {
        let c = ParticleConfiguration::new(self.counts.clone());
        assert_eq!(c.total(), u64::from(self.model.particles()), "particle conservation");
        c
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn into_rng(self) -> R {
        self.rng
    }

    /// `N² − Σ n_i² + (θ/L)·N·(L−1)`, from the running sum of squares.
    pub fn total_rate(&self) -> f64 {
        let n = f64::from(self.model.particles());
        n * n - self.sum_sq as f64
            + self.model.site_param() * n * (self.model.sites() as f64 - 1.0)
    }

    fn draw_holding_time(&mut self) -> Option<f64> {
        let rate = self.total_rate();
        if rate > 0.0 {
            let e: f64 = Exp1.sample(&mut self.rng);
            Some(e / rate)
        } else {
            None
        }
    }

    fn draw_move(&mut self) -> (usize, usize) {
        let source = self
            .sources
            .sample(&mut self.rng)
            .expect("positive total rate implies an occupied source");
        let d = self.model.site_param();
        self.targets.set(source, 0.0);
        let target = self
            .targets
            .sample(&mut self.rng)
            .expect("L >= 2 leaves a target with positive weight");
        self.targets.set(source, f64::from(self.counts[source]) + d);
        (source, target)
    }

    fn apply(&mut self, source: usize, target: usize) {
        assert!(
            self.counts[source] > 0 && source != target,
            "move from empty site {source} or self-move"
        );
        let (ns, nt) = (self.counts[source], self.counts[target]);
        // (ns-1)² + (nt+1)² − ns² − nt² = 2(nt − ns) + 2
        self.sum_sq = self.sum_sq + 2 * u64::from(nt) + 2 - 2 * u64::from(ns);
        self.counts[source] = ns - 1;
        self.counts[target] = nt + 1;
        let d = self.model.site_param();
        self.sources
            .set(source, source_weight(ns - 1, self.row_const));
        self.sources
            .set(target, source_weight(nt + 1, self.row_const));
        self.targets.set(source, f64::from(ns - 1) + d);
        self.targets.set(target, f64::from(nt + 1) + d);
    }

    /// Advances one event. `None` when the total rate is zero (`N = 0` or `L = 1`).
    pub fn step(&mut self) -> Option<Event> {
        let dwell = self.draw_holding_time()?;
        let (source, target) = self.draw_move();
        self.apply(source, target);
        self.time += dwell;
        self.events += 1;
        Some(Event {
            index: self.events,
            time: self.time,
            dwell,
            source,
            target,
        })
    }

    /// Runs until the budget is spent, passing every event to `on_event`.
    pub fn run_with(
        &mut self,
        budget: Budget,
        mut on_event: impl FnMut(&Event) -> Result<()>,
    ) -> Result<ParticleConfiguration> {
        match budget {
            Budget::Events(k) => {
                if k == 0 {
                    return Err(Error::InvalidArgument("event budget must be positive".into()));
                }
                for _ in 0..k {
                    match self.step() {
                        Some(e) => on_event(&e)?,
                        None => return Err(zero_rate()),
                    }
                }
            }
            Budget::Time(horizon) => {
                if !(horizon > 0.0) {
                    return Err(Error::InvalidArgument("time horizon must be positive".into()));
                }
                loop {
                    let dwell = self.draw_holding_time().ok_or_else(zero_rate)?;
                    if self.time + dwell > horizon {
                        self.time = horizon;
                        break;
                    }
                    let (source, target) = self.draw_move();
                    self.apply(source, target);
                    self.time += dwell;
                    self.events += 1;
                    on_event(&Event {
                        index: self.events,
                        time: self.time,
                        dwell,
                        source,
                        target,
                    })?;
                }
            }
        }
        Ok(self.configuration())
    }

    pub fn run(&mut self, budget: Budget) -> Result<ParticleConfiguration> {
        self.run_with(budget, |_| Ok(()))
    }

    pub fn run_traced<W: Write>(
        &mut self,
        budget: Budget,
        sink: &mut TraceSink<W>,
    ) -> Result<ParticleConfiguration> {
        self.run_with(budget, |e| sink.record(e))
    }

    /// Maximum relative drift of the two rate trees against their leaves.
    pub fn index_drift(&self) -> f64 {
        self.sources
            .max_relative_drift()
            .max(self.targets.max_relative_drift())
    }
}

fn source_weight(n: u32, row_const: f64) -> f64 {
    let n = f64::from(n);
    n * (row_const - n)
}

fn zero_rate() -> Error {
    Error::InvalidArgument("total jump rate is zero (need N >= 1 and L >= 2)".into())
}
