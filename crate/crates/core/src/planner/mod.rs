//! Gradient-based local planner on uniform B-splines with anchor-pair
//! collision costs, so no distance field is ever built.

mod bspline;
mod costs;
pub mod gradcheck;
mod optimize;
mod pipeline;
mod search;

pub use bspline::{derivative_points, UniformBSpline};
pub use costs::{anchor_distance, cost_collide, cost_feasible, cost_fit, cost_smooth, hinge, CostGrad, FitTable};
pub use optimize::{minimize, optimize, refinement_objective, trajectory_objective, OptimizeOutcome, OptimizerSettings};
pub use pipeline::{
    evaluate_costs, init_trajectory, plan, push_clear, reassignment_ratio, time_reassign, BoundaryState, PlanCosts, PlanRequest,
    PlanResult, PlanTiming,
};
pub use search::{
    astar_path, collision_segments, control_point_time, first_occupied_sample, generate_anchors, is_curve_free, merge_anchors,
    CollisionSegment, ANCHOR_BISECTION_TOL, MAX_EXPANSIONS,
};

use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack on the safe distance when deciding whether anchors are satisfied, m.
pub const CLEARANCE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("invalid spline: {0}")]
    InvalidSpline(String),
    #[error("parameter {t} outside spline domain [0, {end}]")]
    OutOfDomain { t: f64, end: f64 },
    #[error("degenerate plan request: {0}")]
    DegenerateRequest(String),
    #[error("search start cell is occupied")]
    StartOccupied,
    #[error("search goal cell is occupied")]
    GoalOccupied,
    #[error("point {0:?} lies outside the occupancy grid")]
    OutsideGrid(Vec3),
    #[error("no collision-free path")]
    NoPath,
    #[error("optimizer hit its iteration cap (cost {})", .0.cost)]
    NotConverged(Box<OptimizeOutcome>),
}

/// Obstacle-surface anchor `point` and unit `direction` for control point
/// `index`; the signed clearance is `(Q_index - point) . direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub index: usize,
    pub point: Vec3,
    pub direction: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub lambda_smooth: f64,
    pub lambda_collision: f64,
    pub lambda_feasibility: f64,
    pub lambda_fitness: f64,
    pub omega_v: f64,
    pub omega_a: f64,
    pub omega_j: f64,
    /// m/s
    pub v_max: f64,
    /// m/s^2
    pub a_max: f64,
    /// m/s^3
    pub j_max: f64,
    /// m
    pub safe_distance: f64,
    /// Axial scale of the fitting term.
    pub fit_axial: f64,
    /// Radial scale of the fitting term.
    pub fit_radial: f64,
    pub fit_samples: usize,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            lambda_smooth: 1.0,
            lambda_collision: 8.5,
            lambda_feasibility: 0.1,
            lambda_fitness: 1.0,
            omega_v: 1.0,
            omega_a: 1.0,
            omega_j: 1.0,
            v_max: 2.0,
            a_max: 3.0,
            j_max: 8.0,
            safe_distance: 0.3,
            fit_axial: 20.0,
            fit_radial: 1.0,
            fit_samples: 100,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_collision", self.lambda_collision),
            ("lambda_feasibility", self.lambda_feasibility),
            ("lambda_fitness", self.lambda_fitness),
            ("omega_v", self.omega_v),
            ("omega_a", self.omega_a),
            ("omega_j", self.omega_j),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and >= 0"));
            }
        }
        let positive = [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("j_max", self.j_max),
            ("safe_distance", self.safe_distance),
            ("fit_axial", self.fit_axial),
            ("fit_radial", self.fit_radial),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        if self.fit_samples < 2 {
            return Err("fit_samples must be >= 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub weights: CostWeights,
    pub control_points: usize,
    pub optimizer: OptimizerSettings,
    /// Factor applied to the collision weight when anchors stay unsatisfied.
    pub collision_escalation: f64,
    pub max_collision_rounds: usize,
    /// Record wall-clock time per phase; disabled runs report zero.
    pub record_timing: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            control_points: 25,
            optimizer: OptimizerSettings::default(),
            collision_escalation: 10.0,
            max_collision_rounds: 12,
            record_timing: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.weights.validate().map_err(|e| format!("weights.{e}"))?;
        if self.control_points < 7 {
            return Err("control_points must be >= 7".into());
        }
        if !(self.collision_escalation >= 1.0) {
            return Err("collision_escalation must be >= 1".into());
        }
        if self.optimizer.max_iterations == 0 {
            return Err("optimizer.max_iterations must be >= 1".into());
        }
        Ok(())
    }
}
