//! Per-depth accuracy, failure budget and round length.
//!
//! Round lengths are counted in ticks of the representative that owns the
//! round. Two modes:
//!
//! * `Exact`: the polylog-to-the-16th recursion, unabridged. Astronomically
//!   long at any size that fits on a desk.
//! * `Practical`: an internal round must host `c1 * m * ln(m / eps_r)` Far
//!   exchanges among its `m` children. Children fire Far at rate
//!   `1 / (gamma * time_child)` per tick, so the round lasts
//!   `c1 * gamma * ln(m / eps_r) * time_child` ticks. A leaf round is
//!   `c_leaf * ln(E# / eps_r)` ticks, since every member performs one Near
//!   per representative tick on average.

use super::PlanDepth;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    Exact,
    Practical { gamma: f64, c1: f64, c_leaf: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub n: usize,
    pub eps0: f64,
    pub delta0: f64,
    pub a: f64,
    pub mode: ScheduleMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthParams {
    pub depth: usize,
    pub expected_count: f64,
    /// Children per cell at this depth, 0 for leaves.
    pub subdivision: u32,
    pub eps: f64,
    pub delta: f64,
    /// Round length in ticks of the owning representative.
    pub time: f64,
    /// Per-tick probability that an active representative at this depth
    /// starts a Far exchange.
    pub far_prob: f64,
    /// Practical mode, internal depths: Far exchanges budgeted per round.
    pub exchanges: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSchedule {
    pub config: ScheduleConfig,
    pub depths: Vec<DepthParams>,
}

impl ParamSchedule {
    pub fn depth(&self, r: usize) -> &DepthParams {
        &self.depths[r]
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

/// `c1 * m * ln(m / eps)`: Far exchanges needed to shrink the spread among
/// `m` sub-squares by `eps`.
pub fn exchange_budget(c1: f64, m: f64, eps: f64) -> f64 {
    c1 * m * (m / eps).ln()
}

pub fn build_schedule(config: ScheduleConfig, plan: &[PlanDepth]) -> Result<ParamSchedule> {
    let ScheduleConfig { n, eps0, delta0, a, mode } = config;
    if plan.is_empty() {
        return invalid("partition plan is empty");
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return invalid(format!("eps0 must lie in (0, 1), got {eps0}"));
    }
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return invalid(format!("delta0 must lie in (0, 1), got {delta0}"));
    }
    if !(a > 0.0) {
        return invalid(format!("a must be positive, got {a}"));
    }
    if let ScheduleMode::Practical { gamma, c1, c_leaf } = mode {
        if !(gamma >= 1.0) {
            return invalid(format!("gamma must be >= 1, got {gamma}"));
        }
        if !(c1 > 0.0 && c_leaf > 0.0) {
            return invalid("c1 and c_leaf must be positive");
        }
    }
    let nf = n as f64;
    let depths = plan.len();

    let mut eps = vec![eps0; depths];
    let mut delta = vec![delta0; depths];
    for r in 0..depths - 1 {
        eps[r + 1] = eps[r] / (25.0 * nf.powf(3.5 + a));
        delta[r + 1] = delta[r] / (plan[r].subdivision as f64).powf(2.0 * a);
    }

    let mut time = vec![0.0; depths];
    let mut exchanges = vec![None; depths];
    let last = depths - 1;
    match mode {
        ScheduleMode::Exact => {
            time[last] = ((nf / eps[last]).ln() * (1.0 / delta[last]).ln()).powi(16);
            for r in (0..last).rev() {
                let m = plan[r].subdivision as f64;
                let factor = ((m / eps[r + 1]).ln() * (1.0 / delta[r + 1]).ln()).powi(16);
                time[r] = time[r + 1] * nf.powf(a) * factor;
            }
        }
        ScheduleMode::Practical { gamma, c1, c_leaf } => {
            time[last] = (c_leaf * (plan[last].expected_count / eps[last]).ln()).max(1.0);
            for r in (0..last).rev() {
                let m = plan[r].subdivision as f64;
                let budget = exchange_budget(c1, m, eps[r]);
                exchanges[r] = Some(budget);
                time[r] = budget * gamma * time[r + 1] / m;
            }
        }
    }

    let mut out = Vec::with_capacity(depths);
    for r in 0..depths {
        let far_prob = match mode {
            ScheduleMode::Exact => nf.powf(-a) / time[r],
            ScheduleMode::Practical { gamma, .. } => 1.0 / (gamma * time[r]),
        };
        if !time[r].is_finite() {
            return Err(Error::ScheduleOverflow { depth: r, what: "round length" });
        }
        if !(eps[r] > 0.0) || !(delta[r] > 0.0) {
            return Err(Error::ScheduleOverflow { depth: r, what: "accuracy" });
        }
        if !(far_prob > 0.0 && far_prob <= 1.0) {
            return invalid(format!("far probability {far_prob} at depth {r} outside (0, 1]"));
        }
        out.push(DepthParams {
            depth: r,
            expected_count: plan[r].expected_count,
            subdivision: plan[r].subdivision,
            eps: eps[r],
            delta: delta[r],
            time: time[r],
            far_prob,
            exchanges: exchanges[r],
        });
    }
    Ok(ParamSchedule { config, depths: out })
}
