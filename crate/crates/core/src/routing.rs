//! Greedy geographic forwarding and in-cell flooding.

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::geometry::{GeometricGraph, NodeId, Point};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteResult {
    pub path: Vec<NodeId>,
    pub success: bool,
}

impl RouteResult {
    /// Packet transmissions actually made, also for a failed route.
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Next hop toward `target`: the neighbor strictly closer to it than `at`,
/// closest first, ties to the lowest id.
fn greedy_next(graph: &GeometricGraph, at: NodeId, target: &Point) -> Option<NodeId> {
    let here = graph.position(at).dist2(target);
    let mut best: Option<(f64, NodeId)> = None;
    for &v in graph.neighbors(at) {
        let d = graph.position(v).dist2(target);
        // Neighbor lists are sorted, so strict < keeps the lowest id on ties.
        if d < here && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Forwards toward `dst`'s position until `dst` is reached or no neighbor
/// makes progress. A failed route returns the partial path.
pub fn greedy_route(graph: &GeometricGraph, src: NodeId, dst: NodeId) -> Result<RouteResult> {
    if src == dst {
        return invalid("greedy route needs distinct endpoints");
    }
    let target = graph.position(dst);
    let mut path = vec![src];
    let mut at = src;
    loop {
        // A co-located sensor could tie with dst on distance; deliver instead.
        let next = if graph.neighbors(at).binary_search(&dst).is_ok() {
            Some(dst)
        } else {
            greedy_next(graph, at, &target)
        };
        match next {
            Some(v) => {
                path.push(v);
                if v == dst {
                    return Ok(RouteResult { path, success: true });
                }
                at = v;
            }
            None => return Ok(RouteResult { path, success: false }),
        }
    }
}

/// Forwards toward an arbitrary position and stops at the first sensor with
/// no strictly closer neighbor. The returned path always ends there.
pub fn greedy_toward(graph: &GeometricGraph, src: NodeId, target: &Point) -> Vec<NodeId> {
    let mut path = vec![src];
    let mut at = src;
    while let Some(v) = greedy_next(graph, at, target) {
        path.push(v);
        at = v;
    }
    path
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloodResult {
    pub transmissions: usize,
    pub reached: Vec<NodeId>,
    /// Members not reachable from the origin inside the cell.
    pub unreached: Vec<NodeId>,
}

impl FloodResult {
    pub fn complete(&self) -> bool {
        self.unreached.is_empty()
    }
}

/// Breadth-first flood restricted to `members` (sorted ascending). Each
/// reached node broadcasts once to all of its in-cell neighbors.
pub fn flood(graph: &GeometricGraph, members: &[NodeId], origin: NodeId) -> Result<FloodResult> {
    debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
    let Ok(origin_idx) = members.binary_search(&origin) else {
        return invalid(format!("flood origin {origin} is not a member of the cell"));
    };
    let index_of = |v: NodeId| members.binary_search(&v).ok();
    let mut seen = vec![false; members.len()];
    seen[origin_idx] = true;
    let mut queue = VecDeque::from([origin]);
    let mut reached = Vec::new();
    let mut transmissions = 0;
    while let Some(u) = queue.pop_front() {
        reached.push(u);
        for &v in graph.neighbors(u) {
            if let Some(j) = index_of(v) {
                transmissions += 1;
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    reached.sort_unstable();
    let unreached = members
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|(&m, _)| m)
        .collect();
    Ok(FloodResult { transmissions, reached, unreached })
}
