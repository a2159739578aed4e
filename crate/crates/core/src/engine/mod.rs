//! Discrete-event simulation of the hierarchical protocol. One tick fires one
//! uniformly chosen sensor; routing, floods and updates finish inside it.

mod ledger;
mod metrics;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use ledger::{Action, Category, Event, EventLog, FaultCounters, TransmissionLedger};
pub use metrics::{MetricsRecord, MetricsSeries, StopCondition, StopReason, CSV_HEADER};

use crate::baselines;
use crate::error::{invalid, Error, Result};
use crate::geometry::{is_connected, GeometricGraph, NodeId, Point, PointSet};
use crate::hierarchy::{CellId, DepthParams, Hierarchy, ParamSchedule};
use crate::rng::{stream, SimRng, Stream};
use crate::routing::{flood, greedy_route, FloodResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Hier,
    Boyd,
    Geo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Hier, Algorithm::Boyd, Algorithm::Geo];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Hier => "hier",
            Algorithm::Boyd => "boyd",
            Algorithm::Geo => "geo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hier" => Ok(Algorithm::Hier),
            "boyd" => Ok(Algorithm::Boyd),
            "geo" => Ok(Algorithm::Geo),
            _ => invalid(format!("unknown algorithm {s:?} (expected hier, boyd or geo)")),
        }
    }
}

/// Initial values before centering to mean zero.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// Sensor 0 holds 1, everyone else 0.
    Spike,
    /// Independent uniform on [-1, 1].
    Uniform,
    Gaussian,
    /// The sensor's x coordinate: the slowest mode of local diffusion.
    Gradient,
    Constant(f64),
    Explicit(Vec<f64>),
}

impl InitialDistribution {
    /// Parses `spike`, `uniform`, `gaussian`, `gradient` or `constant`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "spike" => Ok(Self::Spike),
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            "gradient" => Ok(Self::Gradient),
            "constant" => Ok(Self::Constant(1.0)),
            _ => invalid(format!(
                "unknown initial distribution {name:?} \
                 (expected spike, uniform, gaussian, gradient or constant)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Spike => "spike",
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
            Self::Gradient => "gradient",
            Self::Constant(_) => "constant",
            Self::Explicit(_) => "explicit",
        }
    }
}

/// Draws the initial values and centers them to mean zero.
pub fn initial_values(dist: &InitialDistribution, points: &PointSet, seed: u64) -> Result<Vec<f64>> {
    let n = points.len();
    let mut rng = stream(seed, Stream::InitialValues);
    let mut x: Vec<f64> = match dist {
        InitialDistribution::Spike => {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        }
        InitialDistribution::Uniform => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        InitialDistribution::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        InitialDistribution::Gradient => points.points().iter().map(|p| p.x).collect(),
        InitialDistribution::Constant(c) => vec![*c; n],
        InitialDistribution::Explicit(v) => {
            if v.len() != n {
                return invalid(format!("{} initial values for {n} sensors", v.len()));
            }
            v.clone()
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("initial values must be finite");
    }
    if x.iter().all(|&v| v == x[0]) {
        // Rounding in the mean would otherwise leave dust behind.
        x.fill(0.0);
        return Ok(x);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    for v in &mut x {
        *v -= mean;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub init: InitialDistribution,
    /// Keeps every local state on for the whole run.
    pub force_local_on: bool,
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        SimConfig {
            algorithm,
            seed,
            init: InitialDistribution::Spike,
            force_local_on: false,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub id: NodeId,
    pub position: Point,
    pub value: f64,
    pub local_on: bool,
    pub global_on: bool,
    /// Own ticks since the current round started.
    pub counter: u64,
    pub level: u32,
}

/// The sensor that fired and the tick index it fired at (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tick {
    pub tick: u64,
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy)]
struct CachedRoute {
    hops: u64,
    success: bool,
}

/// Hierarchy plus everything derived from it that the protocol reuses.
#[derive(Debug, Clone)]
pub(crate) struct Protocol {
    hierarchy: Hierarchy,
    schedule: ParamSchedule,
    /// Neighbors inside the sensor's own leaf.
    leaf_neighbors: Vec<Vec<NodeId>>,
    /// Flood from the leaf representative, by cell id.
    floods: Vec<Option<FloodResult>>,
    routes: HashMap<(NodeId, NodeId), CachedRoute>,
    /// Whether a representative's square is between Activate and Deactivate.
    square_active: Vec<bool>,
    root_deactivated: bool,
}

impl Protocol {
    fn new(graph: &GeometricGraph, hierarchy: Hierarchy, schedule: ParamSchedule) -> Result<Self> {
        let n = graph.len();
        let leaf_neighbors = (0..n as NodeId)
            .map(|s| {
                let leaf = hierarchy.leaf_of(s);
                graph
                    .neighbors(s)
                    .iter()
                    .copied()
                    .filter(|&v| hierarchy.leaf_of(v) == leaf)
                    .collect()
            })
            .collect();
        let mut floods = vec![None; hierarchy.cells().len()];
        for (id, cell) in hierarchy.leaves() {
            floods[id] = Some(flood(graph, &cell.members, cell.representative)?);
        }
        Ok(Protocol {
            hierarchy,
            schedule,
            leaf_neighbors,
            floods,
            routes: HashMap::new(),
            square_active: vec![false; n],
            root_deactivated: false,
        })
    }

    fn cell_of_rep(&self, s: NodeId) -> CellId {
        self.hierarchy.represented_cell(s).expect("caller checked the level")
    }

    fn params(&self, cell: CellId) -> DepthParams {
        *self.schedule.depth(self.hierarchy.cell(cell).depth)
    }

    fn route(&mut self, graph: &GeometricGraph, from: NodeId, to: NodeId) -> CachedRoute {
        *self.routes.entry((from, to)).or_insert_with(|| {
            let r = greedy_route(graph, from, to).expect("representatives are distinct sensors");
            CachedRoute { hops: r.hops() as u64, success: r.success }
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub(crate) config: SimConfig,
    pub(crate) graph: GeometricGraph,
    pub(crate) protocol: Option<Protocol>,
    pub(crate) nodes: Vec<SensorNode>,
    pub(crate) tick: u64,
    pub(crate) rng: SimRng,
    pub(crate) ledger: TransmissionLedger,
    pub(crate) faults: FaultCounters,
    pub(crate) events: Option<EventLog>,
    initial_norm: f64,
    initial_sum: f64,
    initial_l1: f64,
    connected: bool,
}

/// Sets up a run. The hierarchical protocol needs a hierarchy and a schedule
/// built from the graph's points; the baselines take neither.
pub fn init_sim(
    config: &SimConfig,
    graph: GeometricGraph,
    hierarchy: Option<Hierarchy>,
    schedule: Option<ParamSchedule>,
) -> Result<SimState> {
    let n = graph.len();
    let protocol = match (config.algorithm, hierarchy, schedule) {
        (Algorithm::Hier, Some(h), Some(s)) => {
            check_consistent(&graph, &h, &s)?;
            Some(Protocol::new(&graph, h, s)?)
        }
        (Algorithm::Hier, _, _) => return invalid("hier needs a hierarchy and a schedule"),
        (_, None, None) => None,
        (alg, _, _) => return invalid(format!("{alg} takes no hierarchy or schedule")),
    };
    let values = initial_values(&config.init, graph.points(), config.seed)?;
    let mut nodes: Vec<SensorNode> = (0..n)
        .map(|i| SensorNode {
            id: i as NodeId,
            position: graph.position(i as NodeId),
            value: values[i],
            local_on: config.force_local_on,
            global_on: false,
            counter: 0,
            level: protocol.as_ref().map_or(0, |p| p.hierarchy.levels().level(i as NodeId)),
        })
        .collect();
    if let Some(p) = &protocol {
        nodes[p.hierarchy.root().representative as usize].global_on = true;
    }
    let connected = is_connected(&graph);
    Ok(SimState {
        config: config.clone(),
        graph,
        protocol,
        nodes,
        tick: 0,
        rng: stream(config.seed, Stream::Clock),
        ledger: TransmissionLedger::default(),
        faults: FaultCounters::default(),
        events: config.record_events.then(EventLog::default),
        initial_norm: norm(&values),
        initial_sum: values.iter().sum(),
        initial_l1: values.iter().map(|v| v.abs()).sum(),
        connected,
    })
}

fn check_consistent(graph: &GeometricGraph, h: &Hierarchy, s: &ParamSchedule) -> Result<()> {
    if h.n() != graph.len() || s.config.n != graph.len() {
        return invalid(format!(
            "graph has {} sensors, hierarchy {}, schedule {}",
            graph.len(),
            h.n(),
            s.config.n
        ));
    }
    if s.len() != h.plan().len() {
        return invalid(format!("schedule has {} depths, hierarchy {}", s.len(), h.plan().len()));
    }
    for (d, p) in s.depths.iter().zip(h.plan()) {
        if d.expected_count != p.expected_count || d.subdivision != p.subdivision {
            return invalid(format!("schedule and hierarchy disagree at depth {}", p.depth));
        }
    }
    for (_, leaf) in h.leaves() {
        if leaf.members.iter().any(|&m| !leaf.bounds.contains(&graph.position(m), 1e-12)) {
            return invalid(format!("hierarchy cell {} does not match the graph", leaf.path_string()));
        }
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl SimState {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn graph(&self) -> &GeometricGraph {
        &self.graph
    }

    pub fn hierarchy(&self) -> Option<&Hierarchy> {
        self.protocol.as_ref().map(|p| &p.hierarchy)
    }

    pub fn schedule(&self) -> Option<&ParamSchedule> {
        self.protocol.as_ref().map(|p| &p.schedule)
    }

    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SensorNode {
        &self.nodes[id as usize]
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn ledger(&self) -> &TransmissionLedger {
        &self.ledger
    }

    pub fn faults(&self) -> &FaultCounters {
        &self.faults
    }

    pub fn events(&self) -> Option<&EventLog> {
        self.events.as_ref()
    }

    pub fn values(&self) -> Vec<f64> {
        self.nodes.iter().map(|s| s.value).collect()
    }

    pub fn sum(&self) -> f64 {
        self.nodes.iter().map(|s| s.value).sum()
    }

    pub fn initial_sum(&self) -> f64 {
        self.initial_sum
    }

    pub fn initial_l1(&self) -> f64 {
        self.initial_l1
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    /// Whether the root representative has ended its round.
    pub fn root_deactivated(&self) -> bool {
        self.protocol.as_ref().is_some_and(|p| p.root_deactivated)
    }

    /// Whether `s`'s square is between Activate and Deactivate.
    pub fn square_active(&self, s: NodeId) -> bool {
        self.protocol.as_ref().is_some_and(|p| p.square_active[s as usize])
    }

    pub fn err_l2_ratio(&self) -> f64 {
        if self.initial_norm == 0.0 {
            return 0.0;
        }
        let cur = self.nodes.iter().map(|s| s.value * s.value).sum::<f64>().sqrt();
        cur / self.initial_norm
    }

    pub fn record(&self) -> MetricsRecord {
        MetricsRecord {
            algorithm: self.config.algorithm,
            n: self.nodes.len(),
            seed: self.config.seed,
            tick: self.tick,
            ledger: self.ledger,
            err_l2_ratio: self.err_l2_ratio(),
            faults: self.faults,
        }
    }

    /// Advances the clock and returns the sensor that fires.
    pub(crate) fn next_tick(&mut self) -> NodeId {
        self.tick += 1;
        self.rng.random_range(0..self.nodes.len()) as NodeId
    }

    pub(crate) fn log(&mut self, node: NodeId, action: Action, target: Option<NodeId>, hops: u64) {
        self.ledger.add(action.category(), hops);
        if let Some(log) = &mut self.events {
            log.push(Event { tick: self.tick, node, action, target, hops });
        }
    }

    pub(crate) fn average(&mut self, a: NodeId, b: NodeId) {
        let mean = (self.nodes[a as usize].value + self.nodes[b as usize].value) / 2.0;
        self.nodes[a as usize].value = mean;
        self.nodes[b as usize].value = mean;
    }

    /// One global tick of the configured algorithm.
    pub fn step(&mut self) -> Tick {
        match self.config.algorithm {
            Algorithm::Hier => {
                let s = self.next_tick();
                self.fire(s);
                Tick { tick: self.tick, node: s }
            }
            Algorithm::Boyd => baselines::boyd_step(self),
            Algorithm::Geo => baselines::geo_step(self),
        }
    }

    /// The protocol body for a sensor that fires.
    fn fire(&mut self, s: NodeId) {
        let idx = s as usize;
        if self.nodes[idx].level == 0 {
            if self.nodes[idx].local_on {
                self.near(s);
            }
            return;
        }
        let proto = self.protocol.as_ref().expect("levels come from a hierarchy");
        let cell = proto.cell_of_rep(s);
        let depth = proto.hierarchy.cell(cell).depth;
        let params = proto.params(cell);

        let mut far_done = false;
        if self.nodes[idx].global_on {
            if self.nodes[idx].counter == 0 {
                self.activate(s);
            }
            // The root has no sibling squares to exchange with.
            if depth >= 1 && self.rng.random::<f64>() < params.far_prob {
                far_done = self.far(s);
            }
        }
        if self.nodes[idx].local_on {
            self.near(s);
        }
        // A Far leaves the counter at 0 so the next tick restarts the round.
        if !far_done {
            if self.nodes[idx].counter as f64 >= params.time {
                if self.square_active(s) {
                    self.deactivate(s);
                }
            } else {
                self.nodes[idx].counter += 1;
            }
        }
    }

    fn check_rep(&self, s: NodeId) -> Result<CellId> {
        if s as usize >= self.nodes.len() {
            return invalid(format!("sensor {s} out of range"));
        }
        match self.protocol.as_ref().and_then(|p| p.hierarchy.represented_cell(s)) {
            Some(c) => Ok(c),
            None => invalid(format!("sensor {s} is not a representative")),
        }
    }

    /// Averages `s` with a uniform neighbor inside its leaf. A sensor with no
    /// such neighbor counts an `isolated_near` fault instead.
    pub fn near_exchange(&mut self, s: NodeId) -> Result<()> {
        if self.protocol.is_none() || s as usize >= self.nodes.len() {
            return invalid("near exchange needs a hierarchical run and a valid sensor");
        }
        if !self.nodes[s as usize].local_on {
            return invalid(format!("sensor {s} is not locally active"));
        }
        self.near(s);
        Ok(())
    }

    fn near(&mut self, s: NodeId) {
        let nbrs = &self.protocol.as_ref().expect("hierarchical run").leaf_neighbors[s as usize];
        if nbrs.is_empty() {
            self.faults.isolated_near += 1;
            return;
        }
        let v = nbrs[self.rng.random_range(0..nbrs.len())];
        self.average(s, v);
        self.log(s, Action::Near, Some(v), 2);
    }

    /// Affine exchange between `s` and the representative of a uniformly
    /// chosen sibling square. Returns whether the exchange happened.
    pub fn far_exchange(&mut self, s: NodeId) -> Result<bool> {
        let cell = self.check_rep(s)?;
        if !self.nodes[s as usize].global_on {
            return invalid(format!("representative {s} is not globally active"));
        }
        if self.protocol.as_ref().unwrap().hierarchy.cell(cell).parent.is_none() {
            return invalid("the root has no sibling squares");
        }
        Ok(self.far(s))
    }

    fn far(&mut self, s: NodeId) -> bool {
        let proto = self.protocol.as_ref().unwrap();
        let cell = proto.cell_of_rep(s);
        let params = proto.params(cell);
        let parent = proto.hierarchy.cell(cell).parent.expect("depth >= 1");
        let siblings = &proto.hierarchy.cell(parent).children;
        let own = siblings.iter().position(|&c| c == cell).unwrap();
        let mut k = self.rng.random_range(0..siblings.len() - 1);
        if k >= own {
            k += 1;
        }
        let t = proto.hierarchy.cell(siblings[k]).representative;

        let proto = self.protocol.as_mut().unwrap();
        let there = proto.route(&self.graph, s, t);
        let back = if there.success { Some(proto.route(&self.graph, t, s)) } else { None };
        self.log(s, Action::Far, Some(t), there.hops);
        let Some(back) = back else {
            self.faults.routing_failure += 1;
            return false;
        };
        self.log(t, Action::Far, Some(s), back.hops);
        if !back.success {
            self.faults.routing_failure += 1;
            return false;
        }

        for e in [s, t] {
            if self.square_active(e) && (self.nodes[e as usize].counter as f64) < params.time {
                self.faults.concurrent_violation += 1;
            }
        }
        let coef = 0.4 * params.expected_count;
        let (xs, xt) = (self.nodes[s as usize].value, self.nodes[t as usize].value);
        self.nodes[s as usize].value = xs + coef * (xt - xs);
        self.nodes[t as usize].value = xt + coef * (xs - xt);
        self.nodes[s as usize].counter = 0;
        self.nodes[t as usize].counter = 0;
        true
    }

    /// Starts `s`'s round: floods its leaf on, or switches the child
    /// representatives on (resetting their counters so they start fresh).
    pub fn activate_square(&mut self, s: NodeId) -> Result<()> {
        self.check_rep(s)?;
        self.activate(s);
        Ok(())
    }

    pub fn deactivate_square(&mut self, s: NodeId) -> Result<()> {
        self.check_rep(s)?;
        self.deactivate(s);
        Ok(())
    }

    fn activate(&mut self, s: NodeId) {
        self.toggle(s, true);
    }

    fn deactivate(&mut self, s: NodeId) {
        self.toggle(s, false);
    }

    fn toggle(&mut self, s: NodeId, on: bool) {
        let proto = self.protocol.as_mut().unwrap();
        let cell_id = proto.cell_of_rep(s);
        proto.square_active[s as usize] = on;
        if !on && cell_id == 0 {
            proto.root_deactivated = true;
        }
        let cell = proto.hierarchy.cell(cell_id);
        if cell.is_leaf() {
            let f = proto.floods[cell_id].take().expect("floods cached for every leaf");
            let action = if on { Action::FloodOn } else { Action::FloodOff };
            self.log(s, action, None, f.transmissions as u64);
            let keep = self.config.force_local_on;
            for &m in &f.reached {
                self.nodes[m as usize].local_on = on || keep;
            }
            self.faults.flood_gap += f.unreached.len() as u64;
            self.protocol.as_mut().unwrap().floods[cell_id] = Some(f);
            return;
        }
        let targets: Vec<NodeId> =
            cell.children.iter().map(|&c| proto.hierarchy.cell(c).representative).collect();
        let action = if on { Action::Activate } else { Action::Deactivate };
        for t in targets {
            let r = self.protocol.as_mut().unwrap().route(&self.graph, s, t);
            self.log(s, action, Some(t), r.hops);
            if !r.success {
                self.faults.routing_failure += 1;
                continue;
            }
            let node = &mut self.nodes[t as usize];
            node.global_on = on;
            if on {
                node.counter = 0;
            }
        }
    }

    /// Steps until a stop condition fires. Emits a record at tick 0, every
    /// `stride` ticks, and at the stopping tick.
    pub fn run_with(
        &mut self,
        stop: StopCondition,
        stride: u64,
        mut sink: impl FnMut(&MetricsRecord),
    ) -> StopReason {
        let stride = stride.max(1);
        let mut rec = self.record();
        sink(&rec);
        loop {
            if stop.target.is_some_and(|t| rec.err_l2_ratio <= t) {
                return StopReason::Target;
            }
            if self.tick >= stop.max_ticks {
                return StopReason::MaxTicks;
            }
            self.step();
            let root_done = stop.root_deactivation && self.root_deactivated();
            if self.tick.is_multiple_of(stride) || self.tick >= stop.max_ticks || root_done {
                rec = self.record();
                sink(&rec);
            }
            if root_done {
                return StopReason::RootDeactivated;
            }
        }
    }

    pub fn run(&mut self, stop: StopCondition, stride: u64) -> MetricsSeries {
        let mut records = Vec::new();
        let stop = self.run_with(stop, stride, |r| records.push(r.clone()));
        MetricsSeries { records, stop }
    }
}
