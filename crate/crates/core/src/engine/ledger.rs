//! Transmission accounting, fault counters and the replayable event log.

use std::fmt::{self, Write as _};

use crate::geometry::NodeId;

/// Packet hops by category. Every count is one hop between adjacent sensors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransmissionLedger {
    pub near: u64,
    /// Far exchanges and geographic-gossip round trips, both directions.
    pub far_routing: u64,
    pub activate: u64,
    pub deactivate: u64,
    pub flood: u64,
}

impl TransmissionLedger {
    pub fn total(&self) -> u64 {
        self.near + self.far_routing + self.activate + self.deactivate + self.flood
    }

    /// Activation, deactivation and flood traffic.
    pub fn control(&self) -> u64 {
        self.activate + self.deactivate + self.flood
    }

    pub(crate) fn add(&mut self, category: Category, hops: u64) {
        match category {
            Category::Near => self.near += hops,
            Category::FarRouting => self.far_routing += hops,
            Category::Activate => self.activate += hops,
            Category::Deactivate => self.deactivate += hops,
            Category::Flood => self.flood += hops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Near,
    FarRouting,
    Activate,
    Deactivate,
    Flood,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultCounters {
    pub routing_failure: u64,
    /// Far exchanges touching a representative whose own square was mid-round,
    /// counted once per affected endpoint.
    pub concurrent_violation: u64,
    /// Cell members a flood failed to reach.
    pub flood_gap: u64,
    /// Near attempts by a sensor without a neighbor in its leaf.
    pub isolated_near: u64,
}

impl FaultCounters {
    pub fn total(&self) -> u64 {
        self.routing_failure + self.concurrent_violation + self.flood_gap + self.isolated_near
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Near,
    Far,
    /// Control packet switching a child representative on.
    Activate,
    Deactivate,
    /// Leaf flood switching local states on.
    FloodOn,
    FloodOff,
    /// Baseline neighbor average.
    Average,
    /// Baseline geographic exchange, accepted or not.
    GeoExchange,
}

impl Action {
    pub fn category(self) -> Category {
        match self {
            Action::Near | Action::Average => Category::Near,
            Action::Far | Action::GeoExchange => Category::FarRouting,
            Action::Activate => Category::Activate,
            Action::Deactivate => Category::Deactivate,
            Action::FloodOn | Action::FloodOff => Category::Flood,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Near => "near",
            Action::Far => "far",
            Action::Activate => "activate",
            Action::Deactivate => "deactivate",
            Action::FloodOn => "flood_on",
            Action::FloodOff => "flood_off",
            Action::Average => "average",
            Action::GeoExchange => "geo",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub node: NodeId,
    pub action: Action,
    pub target: Option<NodeId>,
    /// Hops spent, including those of a route that failed part way.
    pub hops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Rebuilds the ledger from the logged hops.
    pub fn replay(&self) -> TransmissionLedger {
        let mut ledger = TransmissionLedger::default();
        for e in &self.events {
            ledger.add(e.action.category(), e.hops);
        }
        ledger
    }

    /// One line per event: `tick node action target hops`, `-` for no target.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let target = e.target.map_or_else(|| "-".to_string(), |t| t.to_string());
            let _ = writeln!(out, "{} {} {} {} {}", e.tick, e.node, e.action, target, e.hops);
        }
        out
    }
}
