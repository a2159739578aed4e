//! Sensor placement in the unit square and the geometric random graph built
//! on top of it.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::{stream, Stream};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// The single adjacency predicate used by the grid, the brute-force scan and
/// routing: closed ball of the given radius.
#[inline]
pub fn within(a: &Point, b: &Point, radius: f64) -> bool {
    a.dist2(b) <= radius * radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
}

impl PointSet {
    /// Wraps explicit coordinates; every coordinate must lie in `[0, 1]`.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return invalid("point set must not be empty");
        }
        for (i, p) in points.iter().enumerate() {
            let ok = (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y);
            if !ok {
                return invalid(format!("point {i} = ({}, {}) outside the unit square", p.x, p.y));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn get(&self, id: NodeId) -> Point {
        self.points[id as usize]
    }
}

/// `n` i.i.d. uniform points in the unit square, deterministic in `seed`.
pub fn sample_points(n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let mut rng = stream(seed, Stream::Placement);
    let points = (0..n)
        .map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    Ok(PointSet { points })
}

/// `c * sqrt(ln n / n)`.
pub fn connectivity_radius(n: f64, c: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return invalid(format!("connectivity radius needs n >= 2, got {n}"));
    }
    if !(c > 0.0) {
        return invalid(format!("radius constant must be positive, got {c}"));
    }
    Ok(c * (n.ln() / n).sqrt())
}

/// Uniform bucket grid over the unit square. The cell side is `1/k` with `k`
/// the largest integer such that the side is still at least the query radius,
/// so every neighbor of a point lies in the 3x3 block around its bucket.
#[derive(Debug, Clone)]
pub struct BucketGrid {
    per_side: usize,
    buckets: Vec<Vec<NodeId>>,
}

impl BucketGrid {
    pub fn new(points: &PointSet, radius: f64) -> Self {
        let per_side = ((1.0 / radius).floor() as usize).max(1);
        let mut buckets = vec![Vec::new(); per_side * per_side];
        let mut grid = Self { per_side, buckets: Vec::new() };
        for (id, p) in points.points().iter().enumerate() {
            let (cx, cy) = grid.cell_of(p);
            buckets[cy * per_side + cx].push(id as NodeId);
        }
        grid.buckets = buckets;
        grid
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn cell_side(&self) -> f64 {
        1.0 / self.per_side as f64
    }

    pub fn cell_of(&self, p: &Point) -> (usize, usize) {
        let k = self.per_side;
        let clamp = |v: f64| ((v * k as f64).floor() as usize).min(k - 1);
        (clamp(p.x), clamp(p.y))
    }

    pub fn bucket(&self, cx: usize, cy: usize) -> &[NodeId] {
        &self.buckets[cy * self.per_side + cx]
    }

    /// Population of the bucket containing `p`.
    pub fn count_at(&self, p: &Point) -> usize {
        let (cx, cy) = self.cell_of(p);
        self.bucket(cx, cy).len()
    }

    pub fn max_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// All ids within `radius` of `p` (closed ball), sorted ascending.
    pub fn query(&self, points: &PointSet, p: &Point, radius: f64) -> Vec<NodeId> {
        let (cx, cy) = self.cell_of(p);
        let k = self.per_side as isize;
        let mut out = Vec::new();
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x < 0 || y < 0 || x >= k || y >= k {
                    continue;
                }
                for &id in self.bucket(x as usize, y as usize) {
                    if within(p, &points.get(id), radius) {
                        out.push(id);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone)]
pub struct GeometricGraph {
    points: PointSet,
    radius: f64,
    adjacency: Vec<Vec<NodeId>>,
    grid: BucketGrid,
}

/// Connects every pair within Euclidean distance `radius` (inclusive).
pub fn build_graph(points: PointSet, radius: f64) -> Result<GeometricGraph> {
    if !(radius > 0.0) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    if radius > std::f64::consts::SQRT_2 {
        return invalid(format!("radius must not exceed sqrt(2), got {radius}"));
    }
    let grid = BucketGrid::new(&points, radius);
    let adjacency = (0..points.len())
        .map(|i| {
            let p = points.get(i as NodeId);
            let mut nbrs = grid.query(&points, &p, radius);
            nbrs.retain(|&j| j as usize != i);
            nbrs
        })
        .collect();
    Ok(GeometricGraph { points, radius, adjacency, grid })
}

impl GeometricGraph {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn position(&self, id: NodeId) -> Point {
        self.points.get(id)
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id as usize]
    }

    pub fn grid(&self) -> &BucketGrid {
        &self.grid
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                if (i as NodeId) < j {
                    out.push((i as NodeId, j));
                }
            }
        }
        out
    }

    /// Component label per node, labels assigned in order of lowest member.
    pub fn components(&self) -> Vec<u32> {
        let n = self.len();
        let mut label = vec![u32::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != u32::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start as NodeId);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if label[v as usize] == u32::MAX {
                        label[v as usize] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

pub fn is_connected(graph: &GeometricGraph) -> bool {
    graph.components().iter().all(|&c| c == 0)
}
