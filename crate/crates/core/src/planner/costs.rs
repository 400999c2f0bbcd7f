//! Trajectory cost terms over control points, each returning the value and
//! its analytic gradient with respect to every control point.

use super::bspline::UniformBSpline;
use super::{AnchorPair, CostWeights};
use crate::geometry::Vec3;

pub type CostGrad = (f64, Vec<Vec3>);

/// Cubic hinge `max(u - L, 0)^3 + max(-L - u, 0)^3` and its derivative.
pub fn hinge(u: f64, limit: f64) -> (f64, f64) {
    if u > limit {
        let e = u - limit;
        (e * e * e, 3.0 * e * e)
    } else if u < -limit {
        let e = -limit - u;
        (e * e * e, -3.0 * e * e)
    } else {
        (0.0, 0.0)
    }
}

/// Sum of squared acceleration and jerk control points.
pub fn cost_smooth(q: &[Vec3], dt: f64) -> CostGrad {
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    for i in 0..q.len().saturating_sub(2) {
        let a = (q[i + 2] - 2.0 * q[i + 1] + q[i]) / dt2;
        cost += a.norm_squared();
        let g = 2.0 * a / dt2;
        grad[i] += g;
        grad[i + 1] -= 2.0 * g;
        grad[i + 2] += g;
    }
    for i in 0..q.len().saturating_sub(3) {
        let j = (q[i + 3] - 3.0 * q[i + 2] + 3.0 * q[i + 1] - q[i]) / dt3;
        cost += j.norm_squared();
        let g = 2.0 * j / dt3;
        grad[i] -= g;
        grad[i + 1] += 3.0 * g;
        grad[i + 2] -= 3.0 * g;
        grad[i + 3] += g;
    }
    (cost, grad)
}

/// Per-axis hinge penalties on velocity, acceleration and jerk control points.
pub fn cost_feasible(q: &[Vec3], dt: f64, w: &CostWeights) -> CostGrad {
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    // stencils mapping control points to each derivative order
    let stencils: [(&[f64], f64, f64); 3] = [
        (&[-1.0, 1.0], dt, w.omega_v),
        (&[1.0, -2.0, 1.0], dt * dt, w.omega_a),
        (&[-1.0, 3.0, -3.0, 1.0], dt * dt * dt, w.omega_j),
    ];
    let limits = [w.v_max, w.a_max, w.j_max];
    for ((coeffs, scale, weight), limit) in stencils.iter().zip(limits) {
        let width = coeffs.len();
        for i in 0..q.len().saturating_sub(width - 1) {
            let d: Vec3 = coeffs.iter().enumerate().map(|(k, c)| q[i + k] * *c).sum::<Vec3>() / *scale;
            for axis in 0..3 {
                let (f, df) = hinge(d[axis], limit);
                if df == 0.0 && f == 0.0 {
                    continue;
                }
                cost += weight * f;
                for (k, c) in coeffs.iter().enumerate() {
                    grad[i + k][axis] += weight * df * c / scale;
                }
            }
        }
    }
    (cost, grad)
}

/// Signed clearance of a control point with respect to its anchor.
pub fn anchor_distance(q: &Vec3, anchor: &AnchorPair) -> f64 {
    (q - anchor.point).dot(&anchor.direction)
}

/// `(s_f - d)^3` for every anchor closer than the safe distance.
pub fn cost_collide(q: &[Vec3], anchors: &[AnchorPair], safe_distance: f64) -> CostGrad {
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    for a in anchors {
        let Some(qi) = q.get(a.index) else { continue };
        let e = safe_distance - anchor_distance(qi, a);
        if e > 0.0 {
            cost += e * e * e;
            grad[a.index] -= 3.0 * e * e * a.direction;
        }
    }
    (cost, grad)
}

/// Reference-curve quantities at the fitting samples, reusable across
/// evaluations against the same reference.
#[derive(Debug, Clone)]
pub struct FitTable {
    samples: Vec<FitSample>,
    inv_a2: f64,
    inv_b2: f64,
}

#[derive(Debug, Clone)]
struct FitSample {
    first: usize,
    basis: Vec<f64>,
    point: Vec3,
    tangent: Vec3,
}

impl FitTable {
    pub fn new(reference: &UniformBSpline, w: &CostWeights) -> Self {
        let k = w.fit_samples.max(2);
        let end = reference.duration();
        let samples = (0..k)
            .map(|s| {
                let t = end * s as f64 / (k - 1) as f64;
                let (first, basis) = reference.basis(t).expect("sample parameter lies in the domain");
                let vel = reference.evaluate(t, 1).expect("in domain");
                let speed = vel.norm();
                // a stationary reference sample has no axial direction
                let tangent = if speed > 1e-12 { vel / speed } else { Vec3::zeros() };
                FitSample { first, basis, point: reference.evaluate(t, 0).expect("in domain"), tangent }
            })
            .collect();
        Self { samples, inv_a2: 1.0 / (w.fit_axial * w.fit_axial), inv_b2: 1.0 / (w.fit_radial * w.fit_radial) }
    }

    pub fn cost(&self, q: &[Vec3]) -> CostGrad {
        let mut grad = vec![Vec3::zeros(); q.len()];
        let mut cost = 0.0;
        let k = self.samples.len() as f64;
        for s in &self.samples {
            let here: Vec3 = s.basis.iter().enumerate().map(|(j, b)| q[s.first + j] * *b).sum();
            let delta = here - s.point;
            let axial = delta.dot(&s.tangent);
            let radial_sq = (delta.norm_squared() - axial * axial).max(0.0);
            cost += axial * axial * self.inv_a2 + radial_sq * self.inv_b2;
            // d/d delta of axial^2/a^2 + (|delta|^2 - axial^2)/b^2
            let g = 2.0 * axial * s.tangent * self.inv_a2 + (2.0 * delta - 2.0 * axial * s.tangent) * self.inv_b2;
            for (j, b) in s.basis.iter().enumerate() {
                grad[s.first + j] += g * (*b / k);
            }
        }
        (cost / k, grad)
    }
}

/// Axial and radial deviation of the curve with control points `q` from the
/// reference curve, averaged over `fit_samples` normalized parameters.
///
/// Both curves share the reference's degree and knot interval.
pub fn cost_fit(q: &[Vec3], reference: &UniformBSpline, w: &CostWeights) -> CostGrad {
    FitTable::new(reference, w).cost(q)
}
