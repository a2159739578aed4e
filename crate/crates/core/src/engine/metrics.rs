use std::fmt;

use super::ledger::{FaultCounters, TransmissionLedger};
use super::Algorithm;

/// CSV columns, in order.
pub const CSV_HEADER: [&str; 13] = [
    "algorithm",
    "n",
    "seed",
    "tick",
    "transmissions_total",
    "transmissions_near",
    "transmissions_far_routing",
    "transmissions_control",
    "err_l2_ratio",
    "routing_failures",
    "concurrent_violations",
    "flood_gaps",
    "isolated_near",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seed: u64,
    pub tick: u64,
    pub ledger: TransmissionLedger,
    /// `|x(t)| / |x(0)|`, 0 when the start is already consensus.
    pub err_l2_ratio: f64,
    pub faults: FaultCounters,
}

impl MetricsRecord {
    pub fn csv_fields(&self) -> [String; 13] {
        [
            self.algorithm.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            self.tick.to_string(),
            self.ledger.total().to_string(),
            self.ledger.near.to_string(),
            self.ledger.far_routing.to_string(),
            self.ledger.control().to_string(),
            self.err_l2_ratio.to_string(),
            self.faults.routing_failure.to_string(),
            self.faults.concurrent_violation.to_string(),
            self.faults.flood_gap.to_string(),
            self.faults.isolated_near.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCondition {
    pub max_ticks: u64,
    /// Stop at the first record with `err_l2_ratio <= target`.
    pub target: Option<f64>,
    /// Stop when the root representative ends its round.
    pub root_deactivation: bool,
}

impl StopCondition {
    pub fn max_ticks(max_ticks: u64) -> Self {
        StopCondition { max_ticks, target: None, root_deactivation: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxTicks,
    Target,
    RootDeactivated,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxTicks => "max_ticks",
            StopReason::Target => "target",
            StopReason::RootDeactivated => "root_deactivated",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub records: Vec<MetricsRecord>,
    pub stop: StopReason,
}

impl MetricsSeries {
    pub fn last(&self) -> &MetricsRecord {
        self.records.last().expect("a run always emits its first record")
    }
}
