//! Recursive square partition of the unit square, cell representatives and
//! sensor levels.
//!
//! Every cell at a given depth has the same area, hence the same expected
//! population, so the subdivision factor only depends on depth and the tree
//! is uniform: all leaves share one depth.

mod schedule;

use std::fmt::Write as _;

pub use schedule::{build_schedule, exchange_budget, DepthParams, ParamSchedule, ScheduleConfig, ScheduleMode};

use crate::error::{Error, Result};
use crate::geometry::{NodeId, Point, PointSet};

pub type CellId = usize;

/// Nearest `k*k` with `k` even to `sqrt(expected_count)`; ties go to the
/// smaller `k`.
pub fn subdivision_factor(expected_count: f64) -> u32 {
    assert!(expected_count > 0.0, "expected count must be positive");
    let target = expected_count.sqrt();
    let root = target.sqrt();
    let mut lo = (root.floor() as u32) & !1;
    if lo < 2 {
        lo = 2;
    }
    let best = [lo.saturating_sub(2), lo, lo + 2]
        .into_iter()
        .filter(|&k| k >= 2)
        .min_by(|&a, &b| {
            let da = ((a * a) as f64 - target).abs();
            let db = ((b * b) as f64 - target).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap();
    best * best
}

/// One row of the partition plan: what every cell at `depth` looks like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanDepth {
    pub depth: usize,
    pub expected_count: f64,
    /// `k*k` children per cell, 0 at the leaf depth.
    pub subdivision: u32,
}

/// The partition recursion as pure arithmetic, independent of placement.
pub fn partition_plan(n: usize, tau: f64) -> Vec<PlanDepth> {
    let mut plan = Vec::new();
    let mut expected = n as f64;
    let mut depth = 0;
    loop {
        if expected > tau {
            let sub = subdivision_factor(expected);
            plan.push(PlanDepth { depth, expected_count: expected, subdivision: sub });
            expected /= sub as f64;
            depth += 1;
        } else {
            plan.push(PlanDepth { depth, expected_count: expected, subdivision: 0 });
            return plan;
        }
    }
}

/// Axis-aligned square `[x0, x0+side] x [y0, y0+side]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Bounds {
    pub fn center(&self) -> Point {
        Point::new(self.x0 + self.side / 2.0, self.y0 + self.side / 2.0)
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        p.x >= self.x0 - tol
            && p.x <= self.x0 + self.side + tol
            && p.y >= self.y0 - tol
            && p.y <= self.y0 + self.side + tol
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareCell {
    /// Child indices from the root; empty for the root.
    pub path: Vec<u32>,
    pub depth: usize,
    pub bounds: Bounds,
    pub expected_count: f64,
    pub members: Vec<NodeId>,
    pub subdivision: u32,
    pub parent: Option<CellId>,
    pub children: Vec<CellId>,
    pub representative: NodeId,
    // Integer grid coordinates at this depth.
    gx: u64,
    gy: u64,
}

impl SquareCell {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn path_string(&self) -> String {
        format_path(&self.path)
    }
}

fn format_path(path: &[u32]) -> String {
    if path.is_empty() {
        return "/".to_string();
    }
    path.iter().fold(String::new(), |mut s, i| {
        let _ = write!(s, "/{i}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAssignment {
    levels: Vec<u32>,
    total: u32,
}

impl LevelAssignment {
    pub fn level(&self, id: NodeId) -> u32 {
        self.levels[id as usize]
    }

    /// Number of levels; the root representative sits at this level.
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.levels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    n: usize,
    tau: f64,
    cells: Vec<SquareCell>,
    plan: Vec<PlanDepth>,
    leaf_of: Vec<CellId>,
    represents: Vec<Option<CellId>>,
    levels: LevelAssignment,
}

/// Default leaf threshold `(ln n)^8`.
pub fn default_threshold(n: usize) -> f64 {
    (n as f64).ln().powi(8)
}

/// Partitions while a cell's expected count exceeds `tau`, then picks
/// representatives top-down (a sensor already representing a shallower cell
/// is skipped) and assigns levels.
pub fn build_hierarchy(points: &PointSet, tau: f64) -> Result<Hierarchy> {
    if !(tau >= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 1, got {tau}")));
    }
    let n = points.len();
    let plan = partition_plan(n, tau);
    let total_levels = plan.len() as u32;

    let mut cells = vec![SquareCell {
        path: Vec::new(),
        depth: 0,
        bounds: Bounds { x0: 0.0, y0: 0.0, side: 1.0 },
        expected_count: n as f64,
        members: (0..n as NodeId).collect(),
        subdivision: plan[0].subdivision,
        parent: None,
        children: Vec::new(),
        representative: 0,
        gx: 0,
        gy: 0,
    }];
    let mut leaf_of = vec![0; n];

    // Cells are appended breadth-first, so depth is nondecreasing in CellId.
    let mut cursor = 0;
    while cursor < cells.len() {
        let depth = cells[cursor].depth;
        let k = (plan[depth].subdivision as f64).sqrt().round() as u64;
        if k == 0 {
            for &m in &cells[cursor].members {
                leaf_of[m as usize] = cursor;
            }
            cursor += 1;
            continue;
        }
        let child_per_side = per_side_at(&plan, depth + 1);
        let (pgx, pgy) = (cells[cursor].gx, cells[cursor].gy);
        let mut buckets: Vec<Vec<NodeId>> = vec![Vec::new(); (k * k) as usize];
        for &m in &cells[cursor].members {
            let p = points.get(m);
            let ix = local_index(p.x, child_per_side, pgx * k, k);
            let iy = local_index(p.y, child_per_side, pgy * k, k);
            buckets[(iy * k + ix) as usize].push(m);
        }
        let side = 1.0 / child_per_side as f64;
        let expected = plan[depth + 1].expected_count;
        let sub = plan[depth + 1].subdivision;
        for (idx, members) in buckets.into_iter().enumerate() {
            let (ix, iy) = (idx as u64 % k, idx as u64 / k);
            let (gx, gy) = (pgx * k + ix, pgy * k + iy);
            let mut path = cells[cursor].path.clone();
            path.push(idx as u32);
            let id = cells.len();
            cells[cursor].children.push(id);
            cells.push(SquareCell {
                path,
                depth: depth + 1,
                bounds: Bounds { x0: gx as f64 * side, y0: gy as f64 * side, side },
                expected_count: expected,
                members,
                subdivision: sub,
                parent: Some(cursor),
                children: Vec::new(),
                representative: 0,
                gx,
                gy,
            });
        }
        cursor += 1;
    }

    if let Some(empty) = cells.iter().find(|c| c.members.is_empty()) {
        return Err(Error::EmptyCell { path: empty.path_string() });
    }

    let mut represents: Vec<Option<CellId>> = vec![None; n];
    let mut levels = vec![0u32; n];
    for id in 0..cells.len() {
        let center = cells[id].bounds.center();
        let rep = cells[id]
            .members
            .iter()
            .copied()
            .filter(|&m| represents[m as usize].is_none())
            .min_by(|&a, &b| {
                let da = points.get(a).dist2(&center);
                let db = points.get(b).dist2(&center);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .ok_or_else(|| Error::NoRepresentative { path: cells[id].path_string() })?;
        cells[id].representative = rep;
        represents[rep as usize] = Some(id);
        levels[rep as usize] = total_levels - cells[id].depth as u32;
    }

    Ok(Hierarchy {
        n,
        tau,
        cells,
        plan,
        leaf_of,
        represents,
        levels: LevelAssignment { levels, total: total_levels },
    })
}

fn per_side_at(plan: &[PlanDepth], depth: usize) -> u64 {
    plan[..depth]
        .iter()
        .map(|d| (d.subdivision as f64).sqrt().round() as u64)
        .product()
}

/// Index of `coord` among the `k` children starting at global column
/// `first`; half-open cells, clamped so the outer edge stays closed and each
/// point stays inside its parent.
fn local_index(coord: f64, per_side: u64, first: u64, k: u64) -> u64 {
    let global = ((coord * per_side as f64).floor() as i64).clamp(0, per_side as i64 - 1) as u64;
    global.saturating_sub(first).min(k - 1)
}

impl Hierarchy {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn threshold(&self) -> f64 {
        self.tau
    }

    pub fn root(&self) -> &SquareCell {
        &self.cells[0]
    }

    pub fn cell(&self, id: CellId) -> &SquareCell {
        &self.cells[id]
    }

    pub fn cells(&self) -> &[SquareCell] {
        &self.cells
    }

    pub fn plan(&self) -> &[PlanDepth] {
        &self.plan
    }

    pub fn levels(&self) -> &LevelAssignment {
        &self.levels
    }

    pub fn total_levels(&self) -> u32 {
        self.levels.total
    }

    pub fn leaf_of(&self, id: NodeId) -> CellId {
        self.leaf_of[id as usize]
    }

    /// The cell a representative stands for, `None` for level-0 sensors.
    pub fn represented_cell(&self, id: NodeId) -> Option<CellId> {
        self.represents[id as usize]
    }

    pub fn leaves(&self) -> impl Iterator<Item = (CellId, &SquareCell)> {
        self.cells.iter().enumerate().filter(|(_, c)| c.is_leaf())
    }

    pub fn cells_at_depth(&self, depth: usize) -> impl Iterator<Item = (CellId, &SquareCell)> {
        self.cells.iter().enumerate().filter(move |(_, c)| c.depth == depth)
    }

    /// One line per cell, breadth-first:
    /// `<path> depth=<r> expected=<E#> count=<#> rep=<id> level=<level>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{} depth={} expected={:.4} count={} rep={} level={}",
                c.path_string(),
                c.depth,
                c.expected_count,
                c.members.len(),
                c.representative,
                self.levels.level(c.representative),
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CellDeviation {
    pub cell: CellId,
    pub depth: usize,
    /// `|#/E# - 1|`
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub cells: Vec<CellDeviation>,
    pub within_tenth: f64,
    pub within_half: f64,
}

impl ConcentrationReport {
    /// Fraction of cells (optionally restricted to one depth) whose
    /// deviation is strictly below `tol`.
    pub fn fraction_within(&self, depth: Option<usize>, tol: f64) -> f64 {
        let selected: Vec<_> = self
            .cells
            .iter()
            .filter(|c| depth.is_none_or(|d| c.depth == d))
            .collect();
        if selected.is_empty() {
            return 1.0;
        }
        selected.iter().filter(|c| c.deviation < tol).count() as f64 / selected.len() as f64
    }
}

pub fn count_concentration(hierarchy: &Hierarchy) -> ConcentrationReport {
    let cells: Vec<_> = hierarchy
        .cells()
        .iter()
        .enumerate()
        .map(|(id, c)| CellDeviation {
            cell: id,
            depth: c.depth,
            deviation: (c.members.len() as f64 / c.expected_count - 1.0).abs(),
        })
        .collect();
    let mut report = ConcentrationReport { cells, within_tenth: 0.0, within_half: 0.0 };
    report.within_tenth = report.fraction_within(None, 0.1);
    report.within_half = report.fraction_within(None, 0.5);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_points;

    fn lattice(per_side: usize) -> PointSet {
        let h = 1.0 / per_side as f64;
        let pts = (0..per_side * per_side)
            .map(|i| {
                let (x, y) = (i % per_side, i / per_side);
                Point::new((x as f64 + 0.5) * h, (y as f64 + 0.5) * h)
            })
            .collect();
        PointSet::from_points(pts).unwrap()
    }

    #[test]
    fn subdivision_examples() {
        assert_eq!(subdivision_factor(1e4), 100);
        assert_eq!(subdivision_factor(16.0), 4);
        assert_eq!(subdivision_factor(256.0), 16);
        // sqrt(64) = 8: 4 is closer than 16.
        assert_eq!(subdivision_factor(64.0), 4);
        assert_eq!(subdivision_factor(1.0), 4);
    }

    #[test]
    fn subdivision_ties_go_to_smaller_k() {
        // sqrt(E#) = 10 is equidistant from 4 (k=2) and 16 (k=4).
        assert_eq!(subdivision_factor(100.0), 4);
    }

    #[test]
    fn subdivision_is_even_square() {
        for e in [2.0, 30.0, 500.0, 4096.0, 1e5, 3.7e6] {
            let s = subdivision_factor(e);
            let k = (s as f64).sqrt() as u32;
            assert_eq!(k * k, s);
            assert_eq!(k % 2, 0);
        }
    }

    #[test]
    fn plan_for_4096_tau_64() {
        let plan = partition_plan(4096, 64.0);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan[0].subdivision, 64);
        assert_eq!(plan[1].expected_count, 64.0);
        assert_eq!(plan[1].subdivision, 0);
    }

    #[test]
    fn single_leaf_when_threshold_exceeds_n() {
        let ps = sample_points(100, 1).unwrap();
        let h = build_hierarchy(&ps, 1e4).unwrap();
        assert_eq!(h.cells().len(), 1);
        assert_eq!(h.total_levels(), 1);
        let rep = h.root().representative;
        assert_eq!(h.levels().level(rep), 1);
        assert_eq!(h.levels().as_slice().iter().filter(|&&l| l > 0).count(), 1);
        let report = count_concentration(&h);
        assert_eq!(report.cells[0].deviation, 0.0);
    }

    #[test]
    fn children_tile_parent() {
        let ps = sample_points(4096, 2).unwrap();
        let h = build_hierarchy(&ps, 64.0).unwrap();
        for c in h.cells().iter().filter(|c| !c.is_leaf()) {
            let area: f64 = c.children.iter().map(|&ch| h.cell(ch).bounds.area()).sum();
            assert!((area - c.bounds.area()).abs() < 1e-12);
            for &ch in &c.children {
                let child = h.cell(ch);
                assert!((child.expected_count - c.expected_count / c.subdivision as f64).abs() < 1e-9);
                assert!(c.bounds.contains(&child.bounds.center(), 0.0));
            }
            let members: usize = c.children.iter().map(|&ch| h.cell(ch).members.len()).sum();
            assert_eq!(members, c.members.len());
        }
    }

    #[test]
    fn members_lie_in_bounds_and_leaves_partition() {
        let ps = sample_points(2048, 9).unwrap();
        let h = build_hierarchy(&ps, 32.0).unwrap();
        let mut seen = vec![0u32; ps.len()];
        for (_, leaf) in h.leaves() {
            for &m in &leaf.members {
                seen[m as usize] += 1;
                assert!(leaf.bounds.contains(&ps.get(m), 1e-12));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn representatives_unique_and_levels_consistent() {
        let ps = sample_points(4096, 4).unwrap();
        let h = build_hierarchy(&ps, 32.0).unwrap();
        let ell = h.total_levels();
        let mut reps: Vec<_> = h.cells().iter().map(|c| c.representative).collect();
        reps.sort_unstable();
        reps.dedup();
        assert_eq!(reps.len(), h.cells().len());
        for c in h.cells() {
            assert!(c.members.contains(&c.representative));
            assert_eq!(h.levels().level(c.representative), ell - c.depth as u32);
        }
        let at_top = h.levels().as_slice().iter().filter(|&&l| l == ell).count();
        assert_eq!(at_top, 1);
        let nonzero = h.levels().as_slice().iter().filter(|&&l| l > 0).count();
        assert_eq!(nonzero, h.cells().len());
    }

    #[test]
    fn representative_is_nearest_to_center_when_free() {
        let ps = sample_points(1024, 6).unwrap();
        let h = build_hierarchy(&ps, 64.0).unwrap();
        let root = h.root();
        let c = root.bounds.center();
        let best = (0..ps.len() as NodeId)
            .min_by(|&a, &b| ps.get(a).dist2(&c).total_cmp(&ps.get(b).dist2(&c)))
            .unwrap();
        assert_eq!(root.representative, best);
    }

    #[test]
    fn shared_nearest_sensor_goes_to_shallower_cell() {
        // Four sensors; the root and the lower-left child both have sensor 0
        // nearest to their centers.
        let pts = vec![
            Point::new(0.3, 0.3),
            Point::new(0.1, 0.1),
            Point::new(0.9, 0.1),
            Point::new(0.1, 0.9),
            Point::new(0.9, 0.9),
        ];
        // Move sensor 0 to where it is nearest to both centers.
        let mut pts = pts;
        pts[0] = Point::new(0.26, 0.26);
        let ps = PointSet::from_points(pts).unwrap();
        let h = build_hierarchy(&ps, 2.0).unwrap();
        assert_eq!(h.root().representative, 0);
        let lower_left = h.cell(h.root().children[0]);
        assert_eq!(lower_left.members, vec![0, 1]);
        assert_eq!(lower_left.representative, 1);
    }

    #[test]
    fn empty_cell_is_reported_with_path() {
        let pts = vec![Point::new(0.1, 0.1), Point::new(0.2, 0.2), Point::new(0.3, 0.1)];
        let ps = PointSet::from_points(pts).unwrap();
        match build_hierarchy(&ps, 1.0) {
            Err(Error::EmptyCell { path }) => assert_eq!(path, "/1"),
            other => panic!("expected empty cell, got {other:?}"),
        }
    }

    #[test]
    fn boundary_points_are_half_open() {
        // x = 0.5 belongs to the right column, x = 1.0 stays in the last one.
        let pts = vec![
            Point::new(0.5, 0.25),
            Point::new(0.25, 0.25),
            Point::new(1.0, 1.0),
            Point::new(0.25, 0.75),
            Point::new(0.75, 0.75),
            Point::new(0.7, 0.2),
        ];
        let ps = PointSet::from_points(pts).unwrap();
        let h = build_hierarchy(&ps, 2.0).unwrap();
        let kids = &h.root().children;
        assert_eq!(h.cell(kids[1]).members, vec![0, 5]);
        assert_eq!(h.cell(kids[3]).members, vec![2, 4]);
    }

    #[test]
    fn threshold_below_one_rejected() {
        let ps = sample_points(10, 1).unwrap();
        assert!(build_hierarchy(&ps, 0.5).is_err());
    }

    #[test]
    fn dump_has_one_line_per_cell() {
        let h = build_hierarchy(&lattice(8), 16.0).unwrap();
        let dump = h.dump();
        assert_eq!(dump.lines().count(), h.cells().len());
        assert!(dump.starts_with("/ depth=0 expected=64.0000 count=64 rep="));
        assert!(dump.contains("\n/3 depth=1 expected=16.0000 count=16 rep="));
    }

    #[test]
    fn rebuild_is_deterministic() {
        let ps = sample_points(3000, 12).unwrap();
        let a = build_hierarchy(&ps, 40.0).unwrap().dump();
        let b = build_hierarchy(&ps, 40.0).unwrap().dump();
        assert_eq!(a, b);
    }
}
