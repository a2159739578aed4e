//! Builds runs from a config, streams their metrics as CSV, and sweeps over
//! sizes and seeds.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode};
use crate::engine::{
    init_sim, Algorithm, FaultCounters, SimConfig, SimState, StopCondition, StopReason,
    TransmissionLedger, CSV_HEADER,
};
use crate::error::Result;
use crate::geometry::{build_graph, connectivity_radius, sample_points};
use crate::hierarchy::{build_hierarchy, build_schedule, ScheduleConfig, ScheduleMode};

/// Points, graph, hierarchy and schedule for `config`, ready to run.
pub fn build_state(config: &ExperimentConfig) -> Result<SimState> {
    let points = sample_points(config.n, config.seed)?;
    let radius = connectivity_radius(config.n as f64, config.radius_c)?;
    let sim = SimConfig {
        record_events: config.event_log.is_some(),
        init: config.init.clone(),
        ..SimConfig::new(config.algorithm, config.seed)
    };
    if config.algorithm != Algorithm::Hier {
        return init_sim(&sim, build_graph(points, radius)?, None, None);
    }
    let hierarchy = build_hierarchy(&points, config.tau())?;
    let mode = match config.mode {
        Mode::Exact => ScheduleMode::Exact,
        Mode::Practical => {
            ScheduleMode::Practical { gamma: config.gamma, c1: config.c1, c_leaf: config.c_leaf }
        }
    };
    let schedule = build_schedule(
        ScheduleConfig { n: config.n, eps0: config.eps, delta0: config.delta, a: config.a, mode },
        hierarchy.plan(),
    )?;
    init_sim(&sim, build_graph(points, radius)?, Some(hierarchy), Some(schedule))
}

pub fn stop_condition(config: &ExperimentConfig) -> StopCondition {
    StopCondition {
        max_ticks: config.max_ticks,
        target: Some(config.eps),
        root_deactivation: config.stop_on_root,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seed: u64,
    pub stop: StopReason,
    pub tick: u64,
    pub err_l2_ratio: f64,
    pub ledger: TransmissionLedger,
    pub faults: FaultCounters,
    pub connected: bool,
    pub sum_drift: f64,
    /// Hard faults (routing failures and flood gaps) exceeded `max_faults`.
    pub fault_limit_exceeded: bool,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} n={} seed={} stop={} tick={} err={:.6} transmissions={} near={} far={} control={} \
             routing_failures={} concurrent_violations={} flood_gaps={} isolated_near={} \
             connected={} sum_drift={:.3e}",
            self.algorithm,
            self.n,
            self.seed,
            self.stop,
            self.tick,
            self.err_l2_ratio,
            self.ledger.total(),
            self.ledger.near,
            self.ledger.far_routing,
            self.ledger.control(),
            self.faults.routing_failure,
            self.faults.concurrent_violation,
            self.faults.flood_gap,
            self.faults.isolated_near,
            self.connected,
            self.sum_drift,
        )?;
        if self.fault_limit_exceeded {
            f.write_str(" FAULT_LIMIT_EXCEEDED")?;
        }
        Ok(())
    }
}

/// Runs `config` to a stop condition, writing the header and one row per
/// record to `out`. The writer is flushed after every row, so a run cut
/// short still leaves a parseable file.
pub fn run_experiment<W: Write>(config: &ExperimentConfig, out: W, header: bool) -> Result<RunSummary> {
    let mut state = build_state(config)?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        csv.write_record(CSV_HEADER)?;
        csv.flush()?;
    }
    let mut failure = None;
    let stop = state.run_with(stop_condition(config), config.stride(), |rec| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = csv.write_record(rec.csv_fields()).and_then(|_| Ok(csv.flush()?)) {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    if let Some(path) = &config.event_log {
        let log = state.events().expect("event recording enabled");
        std::fs::write(path, log.dump())?;
    }
    let rec = state.record();
    let hard = rec.faults.routing_failure + rec.faults.flood_gap;
    Ok(RunSummary {
        algorithm: config.algorithm,
        n: config.n,
        seed: config.seed,
        stop,
        tick: rec.tick,
        err_l2_ratio: rec.err_l2_ratio,
        ledger: rec.ledger,
        faults: rec.faults,
        connected: state.connected(),
        sum_drift: state.sum() - state.initial_sum(),
        fault_limit_exceeded: config.max_faults.is_some_and(|m| hard > m),
    })
}

/// Writes the run's CSV to `config.output`, or to stdout when unset.
pub fn run_to_output(config: &ExperimentConfig) -> Result<RunSummary> {
    match &config.output {
        Some(path) => run_experiment(config, BufWriter::new(File::create(path)?), true),
        None => run_experiment(config, std::io::stdout().lock(), true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub algorithms: Vec<Algorithm>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Every (algorithm, n, seed), sorted.
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for &n in &self.sizes {
                for &seed in &self.seeds {
                    out.push(ExperimentConfig {
                        algorithm,
                        n,
                        seed,
                        output: None,
                        event_log: None,
                        ..self.base.clone()
                    });
                }
            }
        }
        out.sort_by_key(|c| (c.algorithm, c.n, c.seed));
        out.dedup_by_key(|c| (c.algorithm, c.n, c.seed));
        out
    }
}

/// Runs the cross product in parallel and writes one CSV with a single
/// header, rows grouped by (algorithm, n, seed) in sorted order.
pub fn sweep<W: Write>(spec: &SweepSpec, mut out: W) -> Result<Vec<RunSummary>> {
    let runs: Vec<Result<(Vec<u8>, RunSummary)>> = spec
        .configs()
        .par_iter()
        .map(|cfg| {
            let mut buf = Vec::new();
            let summary = run_experiment(cfg, &mut buf, false)?;
            Ok((buf, summary))
        })
        .collect();
    let mut csv = csv::Writer::from_writer(&mut out);
    csv.write_record(CSV_HEADER)?;
    csv.flush()?;
    drop(csv);
    let mut summaries = Vec::with_capacity(runs.len());
    for run in runs {
        let (rows, summary) = run?;
        out.write_all(&rows)?;
        summaries.push(summary);
    }
    out.flush()?;
    Ok(summaries)
}
