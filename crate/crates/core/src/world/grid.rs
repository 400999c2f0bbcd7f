use super::WorldError;
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: Vec3,
    pub max: Vec3,
}

impl Obstacle {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Box of the given size whose footprint is centered at `center_xy` and
    /// which rests on `z = base`.
    pub fn on_ground(center_xy: (f64, f64), size: Vec3, base: f64) -> Self {
        let half = size * 0.5;
        Self {
            min: Vec3::new(center_xy.0 - half.x, center_xy.1 - half.y, base),
            max: Vec3::new(center_xy.0 + half.x, center_xy.1 + half.y, base + size.z),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }

    pub fn footprint_area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl GridBounds {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn footprint_area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

pub type CellIndex = [usize; 3];

/// World-fixed voxel map with raw and inflated occupancy.
///
/// A cell is raw-occupied iff its center lies inside some obstacle. The
/// inflated set is the Chebyshev dilation of the raw set by
/// `ceil(inflation / resolution)` cells. Queries outside the grid report free.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    raw: Vec<bool>,
    inflated: Vec<bool>,
    inflation: f64,
    inflation_cells: usize,
}

/// Number of cells a metric inflation radius dilates by.
///
/// A relative slack of 1e-9 keeps exact multiples (0.3 / 0.15) from rounding
/// up an extra cell through floating-point noise.
pub fn inflation_cells(inflation: f64, resolution: f64) -> usize {
    let ratio = inflation / resolution;
    (ratio - 1e-9 * ratio.max(1.0)).ceil().max(0.0) as usize
}

pub fn grid_from_obstacles(
    obstacles: &[Obstacle],
    bounds: &GridBounds,
    resolution: f64,
    inflation: f64,
) -> Result<OccupancyGrid, WorldError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(WorldError::InvalidResolution(resolution));
    }
    if !(inflation >= 0.0) || !inflation.is_finite() {
        return Err(WorldError::InvalidInflation(inflation));
    }
    let extent = bounds.max - bounds.min;
    if extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(WorldError::EmptyBounds);
    }
    let dims = [0, 1, 2].map(|i| {
        let n = extent[i] / resolution;
        (n - 1e-9 * n.max(1.0)).ceil().max(1.0) as usize
    });
    if let Some(bad) = obstacles.iter().position(|o| !o.is_valid()) {
        return Err(WorldError::InvalidObstacle(bad));
    }

    let mut grid = OccupancyGrid {
        origin: bounds.min,
        resolution,
        dims,
        raw: vec![false; dims[0] * dims[1] * dims[2]],
        inflated: Vec::new(),
        inflation,
        inflation_cells: inflation_cells(inflation, resolution),
    };
    for obstacle in obstacles {
        // only cells whose index range can touch the box need a center test
        let lo = grid.clamped_index(&obstacle.min);
        let hi = grid.clamped_index(&obstacle.max);
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    if obstacle.contains(&grid.cell_center([i, j, k])) {
                        let idx = grid.linear([i, j, k]);
                        grid.raw[idx] = true;
                    }
                }
            }
        }
    }
    grid.inflated = grid.dilate(&grid.raw, grid.inflation_cells);
    Ok(grid)
}

impl OccupancyGrid {
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    /// Dilation radius in cells.
    pub fn inflation_cells(&self) -> usize {
        self.inflation_cells
    }

    pub fn upper_corner(&self) -> Vec3 {
        self.origin + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    pub fn linear(&self, c: CellIndex) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn cell_center(&self, c: CellIndex) -> Vec3 {
        self.origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.resolution
    }

    pub fn index_of(&self, p: &Vec3) -> Option<CellIndex> {
        let mut out = [0usize; 3];
        for i in 0..3 {
            let f = ((p[i] - self.origin[i]) / self.resolution).floor();
            if !f.is_finite() || f < 0.0 || f >= self.dims[i] as f64 {
                return None;
            }
            out[i] = f as usize;
        }
        Some(out)
    }

    fn clamped_index(&self, p: &Vec3) -> CellIndex {
        [0, 1, 2].map(|i| {
            let f = ((p[i] - self.origin[i]) / self.resolution).floor();
            f.clamp(0.0, (self.dims[i] - 1) as f64) as usize
        })
    }

    pub fn is_raw_occupied(&self, c: CellIndex) -> bool {
        self.raw[self.linear(c)]
    }

    /// Inflated occupancy of a cell.
    pub fn is_occupied(&self, c: CellIndex) -> bool {
        self.inflated[self.linear(c)]
    }

    /// Inflated occupancy at a point; points outside the grid are free.
    pub fn is_occupied_at(&self, p: &Vec3) -> bool {
        self.index_of(p).is_some_and(|c| self.is_occupied(c))
    }

    pub fn occupied_cells(&self) -> usize {
        self.inflated.iter().filter(|o| **o).count()
    }

    pub fn raw_occupied_cells(&self) -> usize {
        self.raw.iter().filter(|o| **o).count()
    }

    fn dilate(&self, src: &[bool], radius: usize) -> Vec<bool> {
        if radius == 0 {
            return src.to_vec();
        }
        // the Chebyshev ball is a box, so dilation separates per axis
        let mut cur = src.to_vec();
        for axis in 0..3 {
            let mut next = vec![false; cur.len()];
            let n = self.dims[axis];
            for k in 0..self.dims[2] {
                for j in 0..self.dims[1] {
                    for i in 0..self.dims[0] {
                        let c = [i, j, k];
                        if !cur[self.linear(c)] {
                            continue;
                        }
                        let lo = c[axis].saturating_sub(radius);
                        let hi = (c[axis] + radius).min(n - 1);
                        for a in lo..=hi {
                            let mut d = c;
                            d[axis] = a;
                            next[self.linear(d)] = true;
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Closest free cell to `p` in breadth-first (26-neighbour) order.
    pub fn nearest_free_cell(&self, p: &Vec3) -> Option<CellIndex> {
        let start = self.clamped_index(p);
        if !self.is_occupied(start) {
            return Some(start);
        }
        let mut seen = vec![false; self.inflated.len()];
        let mut queue = VecDeque::from([start]);
        seen[self.linear(start)] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.neighbours(c) {
                let l = self.linear(n);
                if seen[l] {
                    continue;
                }
                if !self.inflated[l] {
                    return Some(n);
                }
                seen[l] = true;
                queue.push_back(n);
            }
        }
        None
    }

    /// In-bounds 26-connected neighbours in a fixed order.
    pub fn neighbours(&self, c: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        (-1i64..=1)
            .flat_map(|dz| (-1i64..=1).flat_map(move |dy| (-1i64..=1).map(move |dx| [dx, dy, dz])))
            .filter(|d| *d != [0, 0, 0])
            .filter_map(move |d| {
                let mut out = [0usize; 3];
                for i in 0..3 {
                    let v = c[i] as i64 + d[i];
                    if v < 0 || v >= self.dims[i] as i64 {
                        return None;
                    }
                    out[i] = v as usize;
                }
                Some(out)
            })
    }

    /// First point where the segment enters an inflated-occupied cell.
    ///
    /// Voxel traversal over the part of the segment inside the grid. If the
    /// segment starts in an occupied cell the start point is returned.
    pub fn raycast(&self, from: &Vec3, to: &Vec3) -> Option<Vec3> {
        let d = to - from;
        let lo = self.origin;
        let hi = self.upper_corner();
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i] == 0.0 {
                if from[i] < lo[i] || from[i] >= hi[i] {
                    return None;
                }
            } else {
                let a = (lo[i] - from[i]) / d[i];
                let b = (hi[i] - from[i]) / d[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 > t1 {
            return None;
        }
        let start = from + d * t0;
        let mut cell = self.clamped_index(&start);
        if self.is_occupied(cell) {
            return Some(start);
        }
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if d[i] > 0.0 {
                step[i] = 1;
                let boundary = lo[i] + (cell[i] + 1) as f64 * self.resolution;
                t_max[i] = (boundary - from[i]) / d[i];
                t_delta[i] = self.resolution / d[i];
            } else if d[i] < 0.0 {
                step[i] = -1;
                let boundary = lo[i] + cell[i] as f64 * self.resolution;
                t_max[i] = (boundary - from[i]) / d[i];
                t_delta[i] = -self.resolution / d[i];
            }
        }
        loop {
            let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
            let t = t_max[axis];
            if t > t1 {
                return None;
            }
            let next = cell[axis] as i64 + step[axis];
            if next < 0 || next >= self.dims[axis] as i64 {
                return None;
            }
            cell[axis] = next as usize;
            if self.is_occupied(cell) {
                return Some(from + d * t);
            }
            t_max[axis] += t_delta[axis];
        }
    }

    /// True when `p` can be sampled along the segment without hitting an
    /// inflated cell, using the voxel traversal.
    pub fn segment_is_free(&self, from: &Vec3, to: &Vec3) -> bool {
        self.raycast(from, to).is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds(lo: f64, hi: f64) -> GridBounds {
        GridBounds::new(Vec3::repeat(lo), Vec3::repeat(hi))
    }

    /// The obstacle-avoidance demo box: 0.6 x 1.2 x 1.2 m.
    fn demo_box() -> Obstacle {
        Obstacle::on_ground((2.0, 0.0), Vec3::new(0.6, 1.2, 1.2), 0.0)
    }

    #[test]
    fn no_obstacles_all_free() {
        let g = grid_from_obstacles(&[], &bounds(-1.0, 1.0), 0.1, 0.3).unwrap();
        assert_eq!(g.occupied_cells(), 0);
        assert_eq!(g.dims(), [20, 20, 20]);
    }

    #[test]
    fn table_inflation_is_two_cells() {
        assert_eq!(inflation_cells(0.299, 0.15), 2);
        assert_eq!(inflation_cells(0.3, 0.15), 2);
        assert_eq!(inflation_cells(0.0, 0.15), 0);
        let g = grid_from_obstacles(&[], &bounds(0.0, 1.0), 0.15, 0.299).unwrap();
        assert_eq!(g.inflation_cells(), 2);
    }

    #[test]
    fn unit_box_brute_force_cells() {
        let o = Obstacle::new(Vec3::repeat(-0.5), Vec3::repeat(0.5));
        let g = grid_from_obstacles(&[o], &bounds(-2.0, 2.0), 0.5, 0.0).unwrap();
        let mut expected = Vec::new();
        for k in 0..8 {
            for j in 0..8 {
                for i in 0..8 {
                    let c = Vec3::new(-2.0 + 0.25 + 0.5 * i as f64, -2.0 + 0.25 + 0.5 * j as f64, -2.0 + 0.25 + 0.5 * k as f64);
                    if c.iter().all(|v| v.abs() <= 0.5) {
                        expected.push([i, j, k]);
                    }
                }
            }
        }
        assert_eq!(expected.len(), 8);
        for k in 0..8 {
            for j in 0..8 {
                for i in 0..8 {
                    assert_eq!(g.is_occupied([i, j, k]), expected.contains(&[i, j, k]), "{i} {j} {k}");
                }
            }
        }
    }

    #[test]
    fn dilation_is_chebyshev_box() {
        let o = Obstacle::new(Vec3::repeat(-0.05), Vec3::repeat(0.05));
        let g = grid_from_obstacles(&[o], &bounds(-1.05, 1.05), 0.1, 0.2).unwrap();
        assert_eq!(g.raw_occupied_cells(), 1);
        assert_eq!(g.occupied_cells(), 125);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let err = grid_from_obstacles(&[], &GridBounds::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)), 0.1, 0.0);
        assert!(matches!(err, Err(WorldError::EmptyBounds)));
        assert!(matches!(grid_from_obstacles(&[], &bounds(0.0, 1.0), 0.0, 0.0), Err(WorldError::InvalidResolution(_))));
    }

    #[test]
    fn raycast_empty_grid() {
        let g = grid_from_obstacles(&[], &bounds(-1.0, 1.0), 0.1, 0.0).unwrap();
        assert_eq!(g.raycast(&Vec3::repeat(-0.9), &Vec3::repeat(0.9)), None);
    }

    #[test]
    fn raycast_zero_length_in_free_cell() {
        let g = grid_from_obstacles(&[demo_box()], &bounds(-3.0, 3.0), 0.15, 0.299).unwrap();
        let p = Vec3::new(-1.0, 0.0, 1.0);
        assert_eq!(g.raycast(&p, &p), None);
    }

    #[test]
    fn raycast_hits_near_face_of_box() {
        let b = demo_box();
        let g = grid_from_obstacles(&[b], &GridBounds::new(Vec3::new(-1.0, -3.0, 0.0), Vec3::new(5.0, 3.0, 3.0)), 0.15, 0.0)
            .unwrap();
        let hit = g.raycast(&Vec3::new(0.0, 0.1, 0.6), &Vec3::new(4.0, 0.1, 0.6)).unwrap();
        assert!((hit.x - b.min.x).abs() <= 0.15, "hit {hit}");
        assert!((hit.y - 0.1).abs() < 1e-12 && (hit.z - 0.6).abs() < 1e-12);
        // from the other side the far face becomes the near face
        let back = g.raycast(&Vec3::new(4.0, 0.1, 0.6), &Vec3::new(0.0, 0.1, 0.6)).unwrap();
        assert!((back.x - b.max.x).abs() <= 0.15, "hit {back}");
    }

    #[test]
    fn raycast_starting_inside_returns_start() {
        let g = grid_from_obstacles(&[demo_box()], &bounds(-3.0, 3.0), 0.15, 0.0).unwrap();
        let p = Vec3::new(2.0, 0.0, 0.5);
        assert_eq!(g.raycast(&p, &Vec3::new(-2.0, 0.0, 0.5)), Some(p));
    }

    #[test]
    fn raycast_outside_grid() {
        let g = grid_from_obstacles(&[demo_box()], &bounds(-3.0, 3.0), 0.15, 0.0).unwrap();
        assert_eq!(g.raycast(&Vec3::new(-9.0, 0.0, 9.0), &Vec3::new(9.0, 0.0, 9.0)), None);
    }

    #[test]
    fn nearest_free_cell_leaves_obstacle() {
        let g = grid_from_obstacles(&[demo_box()], &bounds(-3.0, 3.0), 0.15, 0.299).unwrap();
        let c = g.nearest_free_cell(&Vec3::new(2.0, 0.0, 0.5)).unwrap();
        assert!(!g.is_occupied(c));
    }

    proptest! {
        #[test]
        fn inflation_monotone(
            infl_a in 0.0..0.5f64,
            extra in 0.0..0.5f64,
            cx in -1.0..1.0f64, cy in -1.0..1.0f64,
            sx in 0.05..0.8f64, sy in 0.05..0.8f64, sz in 0.05..0.8f64,
        ) {
            let o = Obstacle::new(Vec3::new(cx - sx, cy - sy, -sz), Vec3::new(cx + sx, cy + sy, sz));
            let b = bounds(-2.0, 2.0);
            let small = grid_from_obstacles(&[o], &b, 0.2, infl_a).unwrap();
            let large = grid_from_obstacles(&[o], &b, 0.2, infl_a + extra).unwrap();
            for (i, raw) in small.raw.iter().enumerate() {
                prop_assert!(!raw || small.inflated[i]);
                prop_assert!(!small.inflated[i] || large.inflated[i]);
            }
        }

        #[test]
        fn raycast_emptiness_is_symmetric(
            a in prop::array::uniform3(-2.9..2.9f64),
            b in prop::array::uniform3(-2.9..2.9f64),
        ) {
            let g = grid_from_obstacles(
                &[demo_box(), Obstacle::new(Vec3::new(-1.5, -2.0, 0.0), Vec3::new(-1.0, 0.5, 2.0))],
                &bounds(-3.0, 3.0), 0.15, 0.15,
            ).unwrap();
            let (a, b) = (Vec3::from(a), Vec3::from(b));
            prop_assert_eq!(g.raycast(&a, &b).is_none(), g.raycast(&b, &a).is_none());
        }

        #[test]
        fn raycast_agrees_with_dense_sampling(
            a in prop::array::uniform3(-2.9..2.9f64),
            b in prop::array::uniform3(-2.9..2.9f64),
        ) {
            let g = grid_from_obstacles(&[demo_box()], &bounds(-3.0, 3.0), 0.15, 0.15).unwrap();
            let (a, b) = (Vec3::from(a), Vec3::from(b));
            let hit = g.raycast(&a, &b);
            let n = 4000;
            let first = (0..=n).map(|k| a + (b - a) * (k as f64 / n as f64)).find(|p| g.is_occupied_at(p));
            match (hit, first) {
                (None, Some(p)) => {
                    // sampling can only see cells the traversal also crosses
                    prop_assert!(false, "sample {p} occupied but raycast clear");
                }
                (Some(h), Some(p)) => prop_assert!((h - a).norm() <= (p - a).norm() + 1e-9),
                _ => {}
            }
        }
    }
}
