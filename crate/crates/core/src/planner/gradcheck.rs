//! Finite-difference verification of the analytic cost gradients.

use super::bspline::UniformBSpline;
use super::costs::{cost_collide, cost_feasible, cost_fit, cost_smooth};
use super::{AnchorPair, CostWeights};
use crate::geometry::Vec3;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Central differences of `f` with respect to every coordinate of every point.
pub fn central_difference<F: Fn(&[Vec3]) -> f64>(q: &[Vec3], h: f64, f: F) -> Vec<Vec3> {
    let mut work = q.to_vec();
    let mut out = vec![Vec3::zeros(); q.len()];
    for i in 0..q.len() {
        for axis in 0..3 {
            let orig = work[i][axis];
            work[i][axis] = orig + h;
            let plus = f(&work);
            work[i][axis] = orig - h;
            let minus = f(&work);
            work[i][axis] = orig;
            out[i][axis] = (plus - minus) / (2.0 * h);
        }
    }
    out
}

/// Largest componentwise difference relative to the larger gradient's
/// max-norm (floored at 1e-9 so all-zero gradients compare equal).
pub fn max_relative_error(analytic: &[Vec3], numeric: &[Vec3]) -> f64 {
    let inf = |g: &[Vec3]| g.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let scale = inf(analytic).max(inf(numeric)).max(1e-9);
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max) / scale
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub term: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
    /// Instances where the gradient was not identically zero.
    pub nontrivial: usize,
}

fn random_points<R: Rng>(rng: &mut R, n: usize, spread: f64) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread), rng.random_range(-spread..spread))).collect()
}

fn is_nontrivial(g: &[Vec3]) -> bool {
    g.iter().any(|v| v.amax() > 0.0)
}

/// Checks every cost term on `instances` random problems.
pub fn run_gradient_suite(seed: u64, instances: usize, h: f64) -> Vec<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let mut record = |term: &'static str, errors: Vec<(f64, bool)>| {
        reports.push(GradcheckReport {
            term,
            instances: errors.len(),
            max_relative_error: errors.iter().map(|e| e.0).fold(0.0, f64::max),
            nontrivial: errors.iter().filter(|e| e.1).count(),
        });
    };

    let mut errors = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(4..26);
        let q = random_points(&mut rng, n, 3.0);
        let dt = rng.random_range(0.1..1.0);
        let g = cost_smooth(&q, dt).1;
        let fd = central_difference(&q, h, |x| cost_smooth(x, dt).0);
        errors.push((max_relative_error(&g, &fd), is_nontrivial(&g)));
    }
    record("smooth", errors);

    let mut errors = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(4..26);
        let q = random_points(&mut rng, n, 3.0);
        let dt = rng.random_range(0.3..1.0);
        let w = CostWeights {
            v_max: rng.random_range(0.5..3.0),
            a_max: rng.random_range(1.0..5.0),
            j_max: rng.random_range(2.0..10.0),
            omega_v: rng.random_range(0.5..2.0),
            omega_a: rng.random_range(0.5..2.0),
            omega_j: rng.random_range(0.5..2.0),
            ..CostWeights::default()
        };
        let g = cost_feasible(&q, dt, &w).1;
        let fd = central_difference(&q, h, |x| cost_feasible(x, dt, &w).0);
        errors.push((max_relative_error(&g, &fd), is_nontrivial(&g)));
    }
    record("feasible", errors);

    let mut errors = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(4..26);
        let q = random_points(&mut rng, n, 2.0);
        let s_f = rng.random_range(0.1..1.0);
        let count = rng.random_range(1..2 * n);
        let anchors: Vec<AnchorPair> = (0..count)
            .map(|_| {
                let index = rng.random_range(0..n);
                let mut d = random_points(&mut rng, 1, 1.0)[0];
                while d.norm() < 1e-3 {
                    d = random_points(&mut rng, 1, 1.0)[0];
                }
                let direction = d.normalize();
                // place the anchor so the clearance straddles the safe distance
                let clearance = rng.random_range(-1.0..1.5) * s_f;
                AnchorPair { index, point: q[index] - direction * clearance + random_points(&mut rng, 1, 0.2)[0].cross(&direction), direction }
            })
            .collect();
        let g = cost_collide(&q, &anchors, s_f).1;
        let fd = central_difference(&q, h, |x| cost_collide(x, &anchors, s_f).0);
        errors.push((max_relative_error(&g, &fd), is_nontrivial(&g)));
    }
    record("collide", errors);

    let mut errors = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(4..26);
        let dt = rng.random_range(0.1..1.0);
        let reference = UniformBSpline::cubic(random_points(&mut rng, n, 3.0), dt).expect("n >= 4 and dt > 0");
        let q: Vec<Vec3> = reference.points().iter().map(|p| p + random_points(&mut rng, 1, 0.5)[0]).collect();
        let w = CostWeights::default();
        let g = cost_fit(&q, &reference, &w).1;
        let fd = central_difference(&q, h, |x| cost_fit(x, &reference, &w).0);
        errors.push((max_relative_error(&g, &fd), is_nontrivial(&g)));
    }
    record("fit", errors);
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_a_quadratic_is_exact_enough() {
        let q = vec![Vec3::new(1.0, 2.0, -1.0), Vec3::new(0.5, 0.0, 3.0)];
        let fd = central_difference(&q, 1e-6, |x| x.iter().map(|v| v.norm_squared()).sum());
        let exact: Vec<Vec3> = q.iter().map(|v| 2.0 * v).collect();
        assert!(max_relative_error(&exact, &fd) < 1e-9);
    }

    #[test]
    fn suite_passes_on_a_small_sample() {
        for r in run_gradient_suite(3, 10, 1e-6) {
            assert_eq!(r.instances, 10);
            assert!(r.nontrivial > 0, "{}", r.term);
            assert!(r.max_relative_error < 1e-4, "{} {}", r.term, r.max_relative_error);
        }
    }
}
