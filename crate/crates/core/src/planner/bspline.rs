use super::PlannerError;
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};

/// Uniform B-spline with knots `t_j = (j - p) * dt`, `j = 0..=N+p`, so the
/// valid parameter domain is `[0, (N - p) * dt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBSpline {
    degree: usize,
    points: Vec<Vec3>,
    dt: f64,
}

impl UniformBSpline {
    pub fn new(degree: usize, points: Vec<Vec3>, dt: f64) -> Result<Self, PlannerError> {
        if points.len() < degree + 1 {
            return Err(PlannerError::InvalidSpline(format!("{} control points cannot carry degree {degree}", points.len())));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(PlannerError::InvalidSpline(format!("knot interval must be > 0, got {dt}")));
        }
        Ok(Self { degree, points, dt })
    }

    /// Cubic spline; the common case throughout the planner.
    pub fn cubic(points: Vec<Vec3>, dt: f64) -> Result<Self, PlannerError> {
        Self::new(3, points, dt)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.points.len() - self.degree) as f64 * self.dt
    }

    pub fn with_points(&self, points: Vec<Vec3>) -> Self {
        assert_eq!(points.len(), self.points.len(), "control point count must not change");
        Self { points, ..self.clone() }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    /// Control points of the first derivative, itself a uniform B-spline of
    /// one degree lower over the same domain.
    pub fn derivative(&self) -> Self {
        if self.degree == 0 {
            return Self { degree: 0, points: vec![Vec3::zeros(); self.points.len()], dt: self.dt };
        }
        let points = derivative_points(&self.points, self.dt);
        Self { degree: self.degree - 1, points, dt: self.dt }
    }

    /// Span index `s` (segment `[s dt, (s+1) dt]`) and local parameter in `[0, 1]`.
    fn locate(&self, t: f64) -> Result<(usize, f64), PlannerError> {
        let end = self.duration();
        let tol = 1e-9 * self.dt.max(end);
        if !(t >= -tol && t <= end + tol) {
            return Err(PlannerError::OutOfDomain { t, end });
        }
        let segments = self.points.len() - self.degree;
        let x = (t / self.dt).clamp(0.0, segments as f64);
        let s = (x.floor() as usize).min(segments - 1);
        Ok((s, x - s as f64))
    }

    /// de Boor evaluation of the curve (order 0) or its derivatives.
    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vec3, PlannerError> {
        let (s, u) = self.locate(t)?;
        if order > self.degree {
            return Ok(Vec3::zeros());
        }
        let mut curve = std::borrow::Cow::Borrowed(self);
        for _ in 0..order {
            curve = std::borrow::Cow::Owned(curve.derivative());
        }
        Ok(de_boor(&curve.points[s..=s + curve.degree], curve.degree, u))
    }

    /// Index of the first active control point at `t` and the basis weights of
    /// the `p + 1` active control points.
    pub fn basis(&self, t: f64) -> Result<(usize, Vec<f64>), PlannerError> {
        let (s, u) = self.locate(t)?;
        let p = self.degree;
        let mut weights = vec![0.0; p + 1];
        for (j, w) in weights.iter_mut().enumerate() {
            let mut unit = vec![Vec3::zeros(); p + 1];
            unit[j] = Vec3::x();
            *w = de_boor(&unit, p, u).x;
        }
        Ok((s, weights))
    }

    /// Samples at `n` evenly spaced parameters covering the whole domain.
    pub fn sample(&self, n: usize, order: usize) -> Vec<(f64, Vec3)> {
        let end = self.duration();
        (0..n)
            .map(|k| {
                let t = if n == 1 { 0.0 } else { end * k as f64 / (n - 1) as f64 };
                (t, self.evaluate(t, order).expect("sample parameter lies in the domain"))
            })
            .collect()
    }
}

/// `(Q_{i+1} - Q_i) / dt`.
pub fn derivative_points(points: &[Vec3], dt: f64) -> Vec<Vec3> {
    points.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

/// de Boor recursion on one span of a uniform knot vector, in knot units:
/// the local knots are `-p+1 .. p` relative to the span start.
fn de_boor(ctrl: &[Vec3], p: usize, u: f64) -> Vec3 {
    let mut d: Vec<Vec3> = ctrl.to_vec();
    for r in 1..=p {
        for j in (r..=p).rev() {
            // knot t_{j+s-p} sits at (j - p) relative to the span start
            let left = j as f64 - p as f64;
            let alpha = (u - left) / ((p + 1 - r) as f64);
            // difference form keeps constant control polygons exact
            d[j] = d[j - 1] + (d[j] - d[j - 1]) * alpha;
        }
    }
    d[p]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(points: &[f64]) -> Vec<Vec3> {
        points.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect()
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(UniformBSpline::cubic(scalar(&[0.0, 1.0, 2.0]), 1.0).is_err());
        assert!(UniformBSpline::cubic(scalar(&[0.0, 1.0, 2.0, 3.0]), 0.0).is_err());
    }

    #[test]
    fn constant_spline() {
        let c = Vec3::new(1.5, -2.0, 0.25);
        let s = UniformBSpline::cubic(vec![c; 7], 0.3).unwrap();
        for k in 0..=20 {
            let t = s.duration() * k as f64 / 20.0;
            assert_eq!(s.evaluate(t, 0).unwrap(), c);
            for order in 1..=3 {
                assert_eq!(s.evaluate(t, order).unwrap(), Vec3::zeros());
            }
        }
    }

    #[test]
    fn first_interior_knot_closed_form() {
        let s = UniformBSpline::cubic(scalar(&[0.0, 1.0, 2.0, 3.0]), 1.0).unwrap();
        assert!((s.evaluate(0.0, 0).unwrap().x - 1.0).abs() < 1e-15);
        let s = UniformBSpline::cubic(scalar(&[0.3, -1.0, 2.5, 7.0, 1.0]), 0.5).unwrap();
        // (Q0 + 4 Q1 + Q2) / 6 at every knot
        assert!((s.evaluate(0.0, 0).unwrap().x - (0.3 - 4.0 + 2.5) / 6.0).abs() < 1e-15);
        assert!((s.evaluate(0.5, 0).unwrap().x - (-1.0 + 10.0 + 7.0) / 6.0).abs() < 1e-15);
        // derivative at a knot: (Q2 - Q0) / (2 dt); second: (Q0 - 2Q1 + Q2) / dt^2
        assert!((s.evaluate(0.0, 1).unwrap().x - (2.5 - 0.3) / 1.0).abs() < 1e-14);
        assert!((s.evaluate(0.0, 2).unwrap().x - (0.3 + 2.0 + 2.5) / 0.25).abs() < 1e-13);
    }

    #[test]
    fn out_of_domain() {
        let s = UniformBSpline::cubic(scalar(&[0.0, 1.0, 2.0, 3.0, 4.0]), 1.0).unwrap();
        assert!(matches!(s.evaluate(2.5, 0), Err(PlannerError::OutOfDomain { .. })));
        assert!(matches!(s.evaluate(-0.1, 0), Err(PlannerError::OutOfDomain { .. })));
        assert!(s.evaluate(2.0, 0).is_ok());
    }

    #[test]
    fn linear_control_points_give_linear_curve() {
        let s = UniformBSpline::cubic(scalar(&[-1.0, 0.0, 1.0, 2.0, 3.0, 4.0]), 0.5).unwrap();
        for k in 0..=30 {
            let t = s.duration() * k as f64 / 30.0;
            assert!((s.evaluate(t, 0).unwrap().x - t / 0.5).abs() < 1e-12);
            assert!((s.evaluate(t, 1).unwrap().x - 2.0).abs() < 1e-12);
        }
    }

    fn random_spline() -> impl Strategy<Value = UniformBSpline> {
        (4usize..12, 0.05..1.0f64).prop_flat_map(|(n, dt)| {
            prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), n)
                .prop_map(move |pts| UniformBSpline::cubic(pts.into_iter().map(Vec3::from).collect(), dt).unwrap())
        })
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(s in random_spline(), frac in 0.0..1.0f64) {
            let h = 1e-6;
            let t = h + frac * (s.duration() - 2.0 * h);
            for order in 0..2 {
                let fd = (s.evaluate(t + h, order).unwrap() - s.evaluate(t - h, order).unwrap()) / (2.0 * h);
                let an = s.evaluate(t, order + 1).unwrap();
                prop_assert!((fd - an).norm() <= 1e-6 * an.norm().max(1.0), "order {}", order);
            }
        }

        #[test]
        fn basis_is_partition_of_unity(s in random_spline(), frac in 0.0..1.0f64) {
            let t = frac * s.duration();
            let (first, w) = s.basis(t).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|x| *x >= -1e-15));
            let recon: Vec3 = w.iter().enumerate().map(|(j, wj)| s.points()[first + j] * *wj).sum();
            prop_assert!((recon - s.evaluate(t, 0).unwrap()).norm() < 1e-12);
        }
    }
}
