//! Reference protocols under the same accounting: randomized neighbor
//! averaging, and geographic gossip with rejection sampling.

use rand::Rng;

use crate::engine::{Action, SimState, Tick};
use crate::geometry::Point;
use crate::routing::{greedy_route, greedy_toward};

/// The firing sensor averages with a uniformly chosen neighbor.
pub fn boyd_step(state: &mut SimState) -> Tick {
    let s = state.next_tick();
    let nbrs = state.graph.neighbors(s);
    if nbrs.is_empty() {
        state.faults.isolated_near += 1;
    } else {
        let v = nbrs[state.rng.random_range(0..nbrs.len())];
        state.average(s, v);
        state.log(s, Action::Average, Some(v), 2);
    }
    Tick { tick: state.tick, node: s }
}

/// The firing sensor routes toward a uniform position; the sensor where
/// greedy progress stops is the candidate partner. The candidate accepts
/// with probability `bucket count / max bucket count`, which evens out the
/// bias toward sensors in sparse regions. On acceptance the candidate routes
/// back and both average. A rejected offer still pays for the forward trip.
pub fn geo_step(state: &mut SimState) -> Tick {
    let s = state.next_tick();
    let tick = Tick { tick: state.tick, node: s };
    let p = Point::new(state.rng.random(), state.rng.random());
    let path = greedy_toward(&state.graph, s, &p);
    let c = *path.last().unwrap();
    if c == s {
        return tick;
    }
    let forward = (path.len() - 1) as u64;
    let grid = state.graph.grid();
    let accept = grid.count_at(&state.graph.position(c)) as f64 / grid.max_count() as f64;
    if state.rng.random::<f64>() >= accept {
        state.log(s, Action::GeoExchange, Some(c), forward);
        return tick;
    }
    let back = greedy_route(&state.graph, c, s).expect("candidate differs from the sender");
    state.log(s, Action::GeoExchange, Some(c), forward + back.hops() as u64);
    if back.success {
        state.average(s, c);
    } else {
        state.faults.routing_failure += 1;
    }
    tick
}
