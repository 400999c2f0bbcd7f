//! Limited-memory quasi-Newton minimization over the movable control points.

use super::costs::{cost_collide, cost_feasible, cost_smooth, CostGrad, FitTable};
use super::{AnchorPair, CostWeights, PlannerError};
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_tolerance: f64,
    pub memory: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { max_iterations: 200, gradient_tolerance: 1e-6, relative_tolerance: 1e-8, memory: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub points: Vec<Vec3>,
    pub cost: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `f` over all control points except the first and last `fixed`.
pub fn minimize<F>(q0: &[Vec3], fixed: usize, settings: &OptimizerSettings, f: F) -> Result<OptimizeOutcome, PlannerError>
where
    F: Fn(&[Vec3]) -> CostGrad,
{
    let n = q0.len();
    let free = fixed..n.saturating_sub(fixed);
    let mut q = q0.to_vec();
    let pack = |g: &[Vec3]| -> Vec<f64> { g[free.clone()].iter().flat_map(|v| [v.x, v.y, v.z]).collect() };
    let with_step = |q: &[Vec3], dir: &[f64], alpha: f64| -> Vec<Vec3> {
        let mut out = q.to_vec();
        for (k, i) in free.clone().enumerate() {
            out[i] += Vec3::new(dir[3 * k], dir[3 * k + 1], dir[3 * k + 2]) * alpha;
        }
        out
    };

    let (mut cost, g) = f(&q);
    let mut grad = pack(&g);
    let mut history = vec![cost];
    if free.is_empty() {
        return Ok(OptimizeOutcome { points: q, cost, iterations: 0, history });
    }
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        if norm(&grad) < settings.gradient_tolerance {
            return Ok(OptimizeOutcome { points: q, cost, iterations, history });
        }
        iterations += 1;
        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &dir);
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let gn = norm(&grad);
            dir.iter_mut().for_each(|d| *d /= gn.max(1.0));
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            memory.clear();
            dir = grad.iter().map(|x| -x / norm(&grad).max(1.0)).collect();
            slope = dot(&grad, &dir);
        }

        // backtracking line search with sufficient decrease
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = with_step(&q, &dir, alpha);
            let (c, g) = f(&trial);
            if c.is_finite() && c <= cost + ARMIJO_C1 * alpha * slope {
                accepted = Some((trial, c, g));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, new_cost, g)) = accepted else {
            if memory.is_empty() {
                // no descent is representable at this resolution
                return Ok(OptimizeOutcome { points: q, cost, iterations, history });
            }
            memory.clear();
            continue;
        };
        let new_grad = pack(&g);
        let s: Vec<f64> = dir.iter().map(|d| d * alpha).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if memory.len() == settings.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let relative = (cost - new_cost).abs() / cost.abs().max(f64::MIN_POSITIVE);
        q = trial;
        cost = new_cost;
        grad = new_grad;
        history.push(cost);
        if relative < settings.relative_tolerance {
            return Ok(OptimizeOutcome { points: q, cost, iterations, history });
        }
    }
    if norm(&grad) < settings.gradient_tolerance {
        return Ok(OptimizeOutcome { points: q, cost, iterations, history });
    }
    Err(PlannerError::NotConverged(Box::new(OptimizeOutcome { points: q, cost, iterations, history })))
}

fn accumulate(total: &mut CostGrad, weight: f64, term: CostGrad) {
    if weight == 0.0 {
        return;
    }
    total.0 += weight * term.0;
    for (t, g) in total.1.iter_mut().zip(term.1) {
        *t += g * weight;
    }
}

/// `lambda_s J_s + lambda_c J_c + lambda_d J_d`.
pub fn trajectory_objective(q: &[Vec3], anchors: &[AnchorPair], w: &CostWeights, dt: f64) -> CostGrad {
    let mut total = (0.0, vec![Vec3::zeros(); q.len()]);
    accumulate(&mut total, w.lambda_smooth, cost_smooth(q, dt));
    accumulate(&mut total, w.lambda_collision, cost_collide(q, anchors, w.safe_distance));
    accumulate(&mut total, w.lambda_feasibility, cost_feasible(q, dt, w));
    total
}

/// `lambda_s J_s + lambda_c J_c + lambda_f J_f` against a reference curve
/// with knot interval `dt`, sampled in `fit`.
pub fn refinement_objective(q: &[Vec3], anchors: &[AnchorPair], w: &CostWeights, dt: f64, fit: &FitTable) -> CostGrad {
    let mut total = (0.0, vec![Vec3::zeros(); q.len()]);
    accumulate(&mut total, w.lambda_smooth, cost_smooth(q, dt));
    accumulate(&mut total, w.lambda_collision, cost_collide(q, anchors, w.safe_distance));
    accumulate(&mut total, w.lambda_fitness, fit.cost(q));
    total
}

/// Minimizes the trajectory objective with the first and last three control
/// points held fixed.
pub fn optimize(
    q0: &[Vec3],
    anchors: &[AnchorPair],
    weights: &CostWeights,
    dt: f64,
    settings: &OptimizerSettings,
) -> Result<OptimizeOutcome, PlannerError> {
    minimize(q0, 3, settings, |q| trajectory_objective(q, anchors, weights, dt))
}
