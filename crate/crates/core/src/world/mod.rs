//! Static obstacles, the inflated occupancy grid and the moving landing platform.

mod grid;
mod platform;

pub use grid::{grid_from_obstacles, inflation_cells, CellIndex, GridBounds, Obstacle, OccupancyGrid};
pub use platform::{platform_advance, PlatformPath, PlatformSegment, PlatformState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("grid bounds are empty or degenerate")]
    EmptyBounds,
    #[error("grid resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("inflation must be non-negative, got {0}")]
    InvalidInflation(f64),
    #[error("obstacle {0} has min > max or non-finite corners")]
    InvalidObstacle(usize),
}

/// Occupied ground footprint (columns containing any raw-occupied cell) over
/// the arena footprint, in 1/m^2 of obstacle area per m^2 of arena.
pub fn obstacle_footprint_density(grid: &OccupancyGrid) -> f64 {
    let [nx, ny, nz] = grid.dims();
    let mut columns = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            if (0..nz).any(|k| grid.is_raw_occupied([i, j, k])) {
                columns += 1;
            }
        }
    }
    let r = grid.resolution();
    columns as f64 * r * r / (nx as f64 * ny as f64 * r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn footprint_density_of_single_box() {
        let o = Obstacle::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0));
        let g = grid_from_obstacles(&[o], &GridBounds::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(3.0, 3.0, 2.0)), 0.25, 0.0)
            .unwrap();
        assert!((obstacle_footprint_density(&g) - 1.0 / 16.0).abs() < 1e-12);
    }
}
