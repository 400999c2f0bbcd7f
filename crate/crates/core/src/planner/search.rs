//! Collision checking of a spline against the inflated grid, A* search and
//! anchor generation for the colliding part of a trajectory.

use super::bspline::UniformBSpline;
use super::costs::anchor_distance;
use super::{AnchorPair, PlannerError};
use crate::geometry::Vec3;
use crate::world::{CellIndex, OccupancyGrid};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

/// Expansion budget for one search; protects against pathological grids.
pub const MAX_EXPANSIONS: usize = 2_000_000;
/// Tolerance of the surface bisection for anchor points, m.
pub const ANCHOR_BISECTION_TOL: f64 = 1e-4;

/// A maximal run of spline samples inside inflated-occupied space, bracketed
/// by the free samples on either side (or the domain ends).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionSegment {
    pub t_begin: f64,
    pub t_end: f64,
    pub begin: Vec3,
    pub end: Vec3,
}

/// Samples the curve every `dt / 4` and groups occupied samples into segments.
pub fn collision_segments(spline: &UniformBSpline, grid: &OccupancyGrid) -> Vec<CollisionSegment> {
    let end = spline.duration();
    let n = (end / (spline.dt() / 4.0)).ceil() as usize + 1;
    let samples = spline.sample(n.max(2), 0);
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (k, (_, p)) in samples.iter().enumerate() {
        let occupied = grid.is_occupied_at(p);
        match (occupied, run_start) {
            (true, None) => run_start = Some(k),
            (false, Some(s)) => {
                let b = s.saturating_sub(1);
                out.push(CollisionSegment { t_begin: samples[b].0, t_end: samples[k].0, begin: samples[b].1, end: samples[k].1 });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        let b = s.saturating_sub(1);
        let last = samples.len() - 1;
        out.push(CollisionSegment { t_begin: samples[b].0, t_end: samples[last].0, begin: samples[b].1, end: samples[last].1 });
    }
    out
}

/// True when no sample at the given spacing falls in an inflated cell.
pub fn is_curve_free(spline: &UniformBSpline, grid: &OccupancyGrid, spacing: f64) -> bool {
    first_occupied_sample(spline, grid, spacing).is_none()
}

/// First sampled parameter whose point is inflated-occupied.
pub fn first_occupied_sample(spline: &UniformBSpline, grid: &OccupancyGrid, spacing: f64) -> Option<f64> {
    // parameter step such that consecutive samples are at most `spacing` apart
    let vmax = spline.derivative().points().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let end = spline.duration();
    let n = if vmax * end <= spacing { 2 } else { ((vmax * end) / spacing).ceil() as usize + 1 };
    spline.sample(n, 0).into_iter().find(|(_, p)| grid.is_occupied_at(p)).map(|(t, _)| t)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    seq: u64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // min-heap on f, then on insertion sequence
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn unlinear(grid: &OccupancyGrid, l: usize) -> CellIndex {
    let [nx, ny, _] = grid.dims();
    [l % nx, (l / nx) % ny, l / (nx * ny)]
}

/// 26-connected A* over the inflated grid with a Euclidean heuristic.
/// Returns the cell-center polyline from the start cell to the goal cell.
pub fn astar_path(grid: &OccupancyGrid, start: &Vec3, goal: &Vec3) -> Result<Vec<Vec3>, PlannerError> {
    let s = grid.index_of(start).ok_or(PlannerError::OutsideGrid(*start))?;
    let g = grid.index_of(goal).ok_or(PlannerError::OutsideGrid(*goal))?;
    if grid.is_occupied(s) {
        return Err(PlannerError::StartOccupied);
    }
    if grid.is_occupied(g) {
        return Err(PlannerError::GoalOccupied);
    }
    let goal_center = grid.cell_center(g);
    let heuristic = |c: CellIndex| (grid.cell_center(c) - goal_center).norm();
    let (sl, gl) = (grid.linear(s), grid.linear(g));

    // cost-so-far and parent per visited cell
    let mut best: HashMap<usize, (f64, usize)> = HashMap::from([(sl, (0.0, sl))]);
    let mut closed: HashMap<usize, ()> = HashMap::new();
    let mut heap = BinaryHeap::from([Open { f: heuristic(s), seq: 0, cell: sl }]);
    let mut seq = 1u64;
    let res = grid.resolution();
    while let Some(Open { cell, .. }) = heap.pop() {
        if closed.insert(cell, ()).is_some() {
            continue;
        }
        if cell == gl {
            let mut path = vec![grid.cell_center(unlinear(grid, gl))];
            let mut cur = gl;
            while cur != sl {
                cur = best[&cur].1;
                path.push(grid.cell_center(unlinear(grid, cur)));
            }
            path.reverse();
            return Ok(path);
        }
        if closed.len() > MAX_EXPANSIONS {
            break;
        }
        let c = unlinear(grid, cell);
        let g_here = best[&cell].0;
        for n in grid.neighbours(c) {
            if grid.is_occupied(n) {
                continue;
            }
            let nl = grid.linear(n);
            if closed.contains_key(&nl) {
                continue;
            }
            let step = res * (((n[0] as i64 - c[0] as i64).pow(2) + (n[1] as i64 - c[1] as i64).pow(2) + (n[2] as i64 - c[2] as i64).pow(2)) as f64).sqrt();
            let tentative = g_here + step;
            if best.get(&nl).is_none_or(|(old, _)| tentative < *old) {
                best.insert(nl, (tentative, cell));
                heap.push(Open { f: tentative + heuristic(n), seq, cell: nl });
                seq += 1;
            }
        }
    }
    Err(PlannerError::NoPath)
}

/// Parameter of the peak of control point `i`'s basis function.
pub fn control_point_time(i: usize, degree: usize, dt: f64) -> f64 {
    (i as f64 - (degree as f64 - 1.0) / 2.0) * dt
}

/// Point of the polyline `path` that the anchor direction of `q` aims at.
///
/// Candidates are the crossings of the path with the plane through `q`
/// normal to the curve tangent, so the direction points sideways around the
/// obstacle rather than back along the curve; the nearest crossing wins
/// (lowest path index on ties). Without any crossing the nearest point of
/// the polyline is used.
fn path_target(path: &[Vec3], q: &Vec3, tangent: &Vec3) -> Vec3 {
    fn consider(best: &mut Option<(f64, Vec3)>, q: &Vec3, c: Vec3) {
        let d = (c - q).norm_squared();
        if d > 1e-18 && best.is_none_or(|(bd, _)| d < bd) {
            *best = Some((d, c));
        }
    }
    let mut best: Option<(f64, Vec3)> = None;
    if tangent.norm() > 1e-12 {
        let side = |v: &Vec3| (v - q).dot(tangent);
        if path.len() == 1 && side(&path[0]) == 0.0 {
            consider(&mut best, q, path[0]);
        }
        for w in path.windows(2) {
            let (sa, sb) = (side(&w[0]), side(&w[1]));
            if sa == 0.0 {
                consider(&mut best, q, w[0]);
            } else if sa * sb < 0.0 || sb == 0.0 {
                consider(&mut best, q, w[0] + (w[1] - w[0]) * (sa / (sa - sb)));
            }
        }
    }
    if let Some((_, c)) = best {
        return c;
    }
    if path.len() == 1 {
        return path[0];
    }
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len2 = seg.norm_squared();
        let s = if len2 > 0.0 { ((q - w[0]).dot(&seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
        consider(&mut best, q, w[0] + seg * s);
    }
    best.map_or(path[0], |(_, c)| c)
}

/// Anchors for the control points of one collision segment.
///
/// For each movable control point whose basis peak lies in the segment, the
/// direction points from the control point to the A* path where the path
/// crosses the plane normal to the curve at that point, and the anchor sits
/// where the line from that path point back toward the control point first
/// meets inflated occupancy. Control points with an unobstructed line to the
/// path receive no anchor. The first and last `degree` control points are
/// never anchored because they pin the boundary state.
pub fn generate_anchors(spline: &UniformBSpline, grid: &OccupancyGrid, segment: &CollisionSegment, path: &[Vec3]) -> Vec<AnchorPair> {
    let p = spline.degree();
    let n = spline.len();
    let mut out = Vec::new();
    if path.is_empty() {
        return out;
    }
    for i in p..n.saturating_sub(p) {
        let t = control_point_time(i, p, spline.dt());
        if t < segment.t_begin || t > segment.t_end {
            continue;
        }
        let q = spline.points()[i];
        let tangent = spline.evaluate(t, 1).unwrap_or_else(|_| spline.points()[i + 1] - spline.points()[i - 1]);
        let target = path_target(path, &q, &tangent);
        let len = (target - q).norm();
        if len < 1e-9 {
            continue;
        }
        let direction = (target - q) / len;
        if let Some(point) = surface_point(grid, &target, &q) {
            out.push(AnchorPair { index: i, point, direction });
        }
    }
    out
}

/// Occupancy boundary on the segment `free -> toward`, approached from `free`.
fn surface_point(grid: &OccupancyGrid, free: &Vec3, toward: &Vec3) -> Option<Vec3> {
    let hit = grid.raycast(free, toward)?;
    let dir = toward - free;
    let len = dir.norm();
    if len < 1e-12 {
        return None;
    }
    let unit = dir / len;
    // everything before the raycast hit is free
    let mut lo = ((hit - free).dot(&unit) - ANCHOR_BISECTION_TOL).max(0.0);
    let mut hi = None;
    let base = (hit - free).dot(&unit);
    for k in 0..=20 {
        let s = (base + k as f64 * 1e-5).min(len);
        if grid.is_occupied_at(&(free + unit * s)) {
            hi = Some(s);
            break;
        }
    }
    let Some(mut hi) = hi else { return Some(hit) };
    while hi - lo > ANCHOR_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if grid.is_occupied_at(&(free + unit * mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(free + unit * hi)
}

/// Adds anchors that are not already represented: a control point that still
/// has an anchor inside the safe distance keeps only that one.
pub fn merge_anchors(existing: &mut Vec<AnchorPair>, new: Vec<AnchorPair>, points: &[Vec3], safe_distance: f64) -> usize {
    let mut added = 0;
    for a in new {
        let active = existing
            .iter()
            .any(|e| e.index == a.index && anchor_distance(&points[e.index], e) < safe_distance);
        if !active {
            existing.push(a);
            added += 1;
        }
    }
    added
}
