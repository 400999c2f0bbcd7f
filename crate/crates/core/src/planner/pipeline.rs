use super::bspline::{derivative_points, UniformBSpline};
use super::costs::{anchor_distance, cost_collide, cost_feasible, cost_fit, cost_smooth, FitTable};
use super::optimize::{minimize, refinement_objective, trajectory_objective, OptimizeOutcome};
use super::search::{astar_path, collision_segments, generate_anchors, merge_anchors, CollisionSegment};
use super::{AnchorPair, CostWeights, PlannerConfig, PlannerError};
use crate::geometry::Vec3;
use crate::world::OccupancyGrid;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Position, velocity and acceleration at a trajectory boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    #[serde(default)]
    pub acceleration: Vec3,
}

impl BoundaryState {
    pub fn at_rest(position: Vec3) -> Self {
        Self { position, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub start: BoundaryState,
    pub goal: Vec3,
    pub goal_velocity: Vec3,
    /// Trajectory duration before time re-assignment, s.
    pub horizon: f64,
    pub grid: &'a OccupancyGrid,
    pub config: &'a PlannerConfig,
}

/// Wall-clock milliseconds per planning phase; zero when timing is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanTiming {
    pub init_ms: f64,
    pub optimize_ms: f64,
    pub refine_ms: f64,
}

impl PlanTiming {
    pub fn total_ms(&self) -> f64 {
        self.init_ms + self.optimize_ms + self.refine_ms
    }
}

/// Unweighted cost terms of the returned trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanCosts {
    pub smooth: f64,
    pub collision: f64,
    pub feasibility: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub trajectory: UniformBSpline,
    /// Time-reassigned curve the refinement was fitted to.
    pub reference: UniformBSpline,
    pub anchors: Vec<AnchorPair>,
    pub timing: PlanTiming,
    pub iterations: usize,
    pub costs: PlanCosts,
    /// Collision weight in force at the end of planning.
    pub collision_weight: f64,
    /// False when an optimizer stage stopped at its iteration cap.
    pub converged: bool,
    /// Sampled clearance against the inflated grid at the spline's own
    /// collision-check spacing.
    pub collision_free: bool,
    /// False when the refined curve was rejected in favour of the reference.
    pub refined: bool,
}

/// Unweighted costs of `spline` with respect to the given anchors and reference.
pub fn evaluate_costs(spline: &UniformBSpline, anchors: &[AnchorPair], reference: &UniformBSpline, w: &CostWeights) -> PlanCosts {
    let q = spline.points();
    PlanCosts {
        smooth: cost_smooth(q, spline.dt()).0,
        collision: cost_collide(q, anchors, w.safe_distance).0,
        feasibility: cost_feasible(q, spline.dt(), w).0,
        fitness: cost_fit(q, reference, w).0,
    }
}

/// Cubic spline meeting the start position/velocity/acceleration and the goal
/// position/velocity (zero goal acceleration), interior control points
/// linearly interpolated, `dt = horizon / (N - 3)`.
pub fn init_trajectory(
    start: &BoundaryState,
    goal: &Vec3,
    goal_velocity: &Vec3,
    horizon: f64,
    control_points: usize,
) -> Result<UniformBSpline, PlannerError> {
    if !(horizon.is_finite() && horizon > 1e-6) {
        return Err(PlannerError::DegenerateRequest(format!("horizon must be > 1e-6 s, got {horizon}")));
    }
    if control_points < 7 {
        return Err(PlannerError::DegenerateRequest(format!("need at least 7 control points, got {control_points}")));
    }
    let finite = [start.position, start.velocity, start.acceleration, *goal, *goal_velocity].iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(PlannerError::DegenerateRequest("non-finite boundary state".into()));
    }
    let n = control_points;
    let dt = horizon / (n - 3) as f64;
    let mut points = vec![Vec3::zeros(); n];
    set_boundary_points(&mut points, start, goal, goal_velocity, dt);
    let (q2, e0) = (points[2], points[n - 3]);
    let span = (n - 5) as f64;
    for (i, pt) in points.iter_mut().enumerate().take(n - 3).skip(3) {
        let s = (i - 2) as f64 / span;
        *pt = q2 + (e0 - q2) * s;
    }
    UniformBSpline::cubic(points, dt)
}

/// Overwrites the first and last three control points so the cubic curve
/// with knot interval `dt` starts at `start` and ends at `goal` with
/// `goal_velocity` and zero acceleration.
fn set_boundary_points(points: &mut [Vec3], start: &BoundaryState, goal: &Vec3, goal_velocity: &Vec3, dt: f64) {
    let n = points.len();
    let (p, v, a) = (start.position, start.velocity, start.acceleration);
    let q1 = p - a * (dt * dt / 6.0);
    points[0] = q1 + a * (dt * dt / 2.0) - v * dt;
    points[1] = q1;
    points[2] = q1 + a * (dt * dt / 2.0) + v * dt;
    points[n - 3] = goal - goal_velocity * dt;
    points[n - 2] = *goal;
    points[n - 1] = goal + goal_velocity * dt;
}

fn exceeds_limits(q: &[Vec3], dt: f64, w: &CostWeights) -> bool {
    let v = derivative_points(q, dt);
    let a = derivative_points(&v, dt);
    let j = derivative_points(&a, dt);
    v.iter().any(|x| x.norm() > w.v_max) || a.iter().any(|x| x.norm() > w.a_max) || j.iter().any(|x| x.norm() > w.j_max)
}

/// Stretches the knot interval so every velocity, acceleration and jerk
/// control point is within its limit (Euclidean norm, which also bounds
/// each axis). Control points are unchanged.
pub fn time_reassign(spline: &UniformBSpline, w: &CostWeights) -> UniformBSpline {
    let dt = spline.dt();
    let q = spline.points();
    let v = derivative_points(q, dt);
    let a = derivative_points(&v, dt);
    let j = derivative_points(&a, dt);
    let peak = |d: &[Vec3]| d.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut ratio = 1.0f64.max(peak(&v) / w.v_max).max((peak(&a) / w.a_max).sqrt()).max((peak(&j) / w.j_max).cbrt());
    if ratio == 1.0 {
        return spline.clone();
    }
    // rounding can leave a limit exceeded by an ulp; nudge until it holds
    while exceeds_limits(q, ratio * dt, w) {
        ratio *= 1.0 + 1e-12;
    }
    spline.with_dt(ratio * dt)
}

/// Ratio between the reassigned and original knot interval.
pub fn reassignment_ratio(before: &UniformBSpline, after: &UniformBSpline) -> f64 {
    after.dt() / before.dt()
}

fn elapsed_ms(start: Option<Instant>) -> f64 {
    start.map(|s| s.elapsed().as_secs_f64() * 1e3).unwrap_or(0.0)
}

fn take_outcome(r: Result<OptimizeOutcome, PlannerError>, converged: &mut bool) -> Result<OptimizeOutcome, PlannerError> {
    match r {
        Ok(o) => Ok(o),
        Err(PlannerError::NotConverged(best)) => {
            *converged = false;
            Ok(*best)
        }
        Err(e) => Err(e),
    }
}

/// Search endpoint for a segment boundary; a boundary in occupied space
/// (the curve starts inside inflation) snaps to the nearest free cell.
fn search_endpoint(grid: &OccupancyGrid, p: &Vec3) -> Option<Vec3> {
    if grid.index_of(p).is_some_and(|c| !grid.is_occupied(c)) {
        return Some(*p);
    }
    grid.index_of(p)?;
    grid.nearest_free_cell(p).map(|c| grid.cell_center(c))
}

fn anchors_unmet(points: &[Vec3], anchors: &[AnchorPair], w: &CostWeights) -> bool {
    anchors.iter().any(|a| anchor_distance(&points[a.index], a) < w.safe_distance - super::CLEARANCE_TOLERANCE)
}

fn anchors_for(spline: &UniformBSpline, grid: &OccupancyGrid, segments: &[CollisionSegment]) -> Result<Vec<AnchorPair>, PlannerError> {
    let mut out = Vec::new();
    for seg in segments {
        let (Some(a), Some(b)) = (search_endpoint(grid, &seg.begin), search_endpoint(grid, &seg.end)) else {
            continue;
        };
        let path = astar_path(grid, &a, &b)?;
        out.extend(generate_anchors(spline, grid, seg, &path));
    }
    Ok(out)
}

/// Optimization rounds: detect colliding segments, add anchors, optimize.
/// The first round always optimizes, so smoothness and feasibility are
/// enforced even without collisions. When a round adds no anchors but clearance is still unmet, the
/// collision weight is multiplied by `collision_escalation`.
pub fn push_clear(
    initial: &UniformBSpline,
    grid: &OccupancyGrid,
    config: &PlannerConfig,
    anchors: &mut Vec<AnchorPair>,
) -> Result<(UniformBSpline, f64, usize, bool), PlannerError> {
    let mut spline = initial.clone();
    let mut weights = config.weights;
    let mut iterations = 0;
    let mut converged = true;
    for round in 0..config.max_collision_rounds {
        let segments = collision_segments(&spline, grid);
        let new = anchors_for(&spline, grid, &segments)?;
        let added = merge_anchors(anchors, new, spline.points(), weights.safe_distance);
        // the first round always runs: it is the smoothness/feasibility pass
        if round > 0 && (anchors.is_empty() || (segments.is_empty() && !anchors_unmet(spline.points(), anchors, &weights))) {
            break;
        }
        if round > 0 && added == 0 {
            weights.lambda_collision *= config.collision_escalation;
        }
        let dt = spline.dt();
        let outcome = take_outcome(
            minimize(spline.points(), 3, &config.optimizer, |q| trajectory_objective(q, anchors, &weights, dt)),
            &mut converged,
        )?;
        iterations += outcome.iterations;
        spline = spline.with_points(outcome.points);
    }
    Ok((spline, weights.lambda_collision, iterations, converged))
}

/// Full local planning pipeline: initialization, collision rounds, time
/// re-assignment and refinement against the reassigned curve.
pub fn plan(request: &PlanRequest) -> Result<PlanResult, PlannerError> {
    let config = request.config;
    let grid = request.grid;
    let clock = || config.record_timing.then(Instant::now);

    let t_init = clock();
    let init = init_trajectory(&request.start, &request.goal, &request.goal_velocity, request.horizon, config.control_points)?;
    let init_ms = elapsed_ms(t_init);

    let t_opt = clock();
    let mut anchors = Vec::new();
    let (optimized, collision_weight, mut iterations, mut converged) = push_clear(&init, grid, config, &mut anchors)?;
    let optimize_ms = elapsed_ms(t_opt);

    let t_ref = clock();
    let reference = time_reassign(&optimized, &config.weights);
    let weights = CostWeights { lambda_collision: collision_weight, ..config.weights };
    let fit = FitTable::new(&reference, &weights);
    // stretching the knot interval also slows the boundary velocities; the
    // refined curve starts again from the requested states
    let mut seed = reference.points().to_vec();
    set_boundary_points(&mut seed, &request.start, &request.goal, &request.goal_velocity, reference.dt());
    let outcome = take_outcome(
        minimize(&seed, 3, &config.optimizer, |q| refinement_objective(q, &anchors, &weights, reference.dt(), &fit)),
        &mut converged,
    )?;
    iterations += outcome.iterations;
    let candidate = reference.with_points(outcome.points);
    let reference_free = collision_segments(&reference, grid).is_empty();
    let candidate_free = collision_segments(&candidate, grid).is_empty();
    let (trajectory, refined) = if candidate_free || !reference_free { (candidate, true) } else { (reference.clone(), false) };
    let refine_ms = elapsed_ms(t_ref);

    let costs = evaluate_costs(&trajectory, &anchors, &reference, &config.weights);
    Ok(PlanResult {
        collision_free: if refined { candidate_free } else { reference_free },
        trajectory,
        reference,
        anchors,
        timing: PlanTiming { init_ms, optimize_ms, refine_ms },
        iterations,
        costs,
        collision_weight,
        converged,
        refined,
    })
}
