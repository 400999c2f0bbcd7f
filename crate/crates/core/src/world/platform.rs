use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};

/// Ground vehicle carrying the landing pad. `center` is the pad center in
/// world coordinates; its `z` is the pad surface height and never changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub center: Vec3,
    pub heading: f64,
    pub velocity: Vec3,
}

impl PlatformState {
    pub fn surface_height(&self) -> f64 {
        self.center.z
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Constant-velocity linear motion. Vertical velocity is ignored so the pad
/// stays on its plane.
pub fn platform_advance(platform: &PlatformState, dt: f64) -> PlatformState {
    let v = Vec3::new(platform.velocity.x, platform.velocity.y, 0.0);
    PlatformState { center: platform.center + v * dt.max(0.0), ..*platform }
}

/// One constant-velocity leg of the platform route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSegment {
    /// s
    pub duration: f64,
    /// Horizontal velocity, m/s.
    pub velocity: [f64; 2],
}

impl PlatformSegment {
    /// Straight leg along the heading direction given in km/h.
    pub fn along(heading: f64, speed_kmh: f64, duration: f64) -> Self {
        let v = speed_kmh / 3.6;
        Self { duration, velocity: [v * heading.cos(), v * heading.sin()] }
    }
}

/// Piecewise-constant velocity schedule; the platform stops after the last leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformPath {
    pub start: Vec3,
    pub heading: f64,
    #[serde(default)]
    pub segments: Vec<PlatformSegment>,
}

impl PlatformPath {
    pub fn velocity_at(&self, t: f64) -> Vec3 {
        let mut t0 = 0.0;
        for s in &self.segments {
            if t >= t0 && t < t0 + s.duration {
                return Vec3::new(s.velocity[0], s.velocity[1], 0.0);
            }
            t0 += s.duration;
        }
        Vec3::zeros()
    }

    pub fn initial_state(&self) -> PlatformState {
        PlatformState { center: self.start, heading: self.heading, velocity: self.velocity_at(0.0) }
    }

    /// Mean speed over the scheduled legs, m/s.
    pub fn nominal_speed(&self) -> f64 {
        let total: f64 = self.segments.iter().map(|s| s.duration).sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.segments.iter().map(|s| s.duration * s.velocity[0].hypot(s.velocity[1])).sum::<f64>() / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moving(speed_kmh: f64) -> PlatformState {
        PlatformState { center: Vec3::new(0.0, 0.0, 0.4), heading: std::f64::consts::FRAC_PI_2, velocity: Vec3::new(0.0, speed_kmh / 3.6, 0.0) }
    }

    #[test]
    fn stationary_platform_unchanged() {
        let p = moving(0.0);
        assert_eq!(platform_advance(&p, 3.0), p);
    }

    #[test]
    fn indoor_speed_one_second() {
        let p = platform_advance(&moving(0.8), 1.0);
        assert!((p.center.y - 0.8 / 3.6).abs() < 1e-15);
        assert!((p.center.y - 0.2222).abs() < 1e-4);
    }

    #[test]
    fn outdoor_speed_ten_seconds() {
        let p = platform_advance(&moving(3.24), 10.0);
        assert!((p.center.y - 9.0).abs() < 1e-12);
        assert_eq!(p.center.z, 0.4);
    }

    #[test]
    fn path_schedule() {
        let path = PlatformPath {
            start: Vec3::zeros(),
            heading: 0.0,
            segments: vec![PlatformSegment::along(0.0, 3.6, 2.0), PlatformSegment { duration: 1.0, velocity: [0.0, -2.0] }],
        };
        assert_eq!(path.velocity_at(0.5), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(path.velocity_at(2.5), Vec3::new(0.0, -2.0, 0.0));
        assert_eq!(path.velocity_at(3.5), Vec3::zeros());
        assert!((path.nominal_speed() - 4.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        // dyadic step sizes make repeated addition exact in binary floating point
        #[test]
        fn n_steps_equal_one_long_step(n in 1u32..64, k in 1i32..8, vx in -8i32..8, vy in -8i32..8) {
            let dt = 2f64.powi(-k);
            let p = PlatformState { center: Vec3::new(1.0, -2.0, 0.4), heading: 0.0, velocity: Vec3::new(vx as f64 * 0.25, vy as f64 * 0.25, 0.0) };
            let mut stepped = p;
            for _ in 0..n {
                stepped = platform_advance(&stepped, dt);
            }
            prop_assert_eq!(stepped, platform_advance(&p, n as f64 * dt));
        }

        #[test]
        fn n_steps_close_for_any_dt(n in 1u32..500, dt in 1e-4..0.1f64, v in prop::array::uniform2(-3.0..3.0f64)) {
            let p = PlatformState { center: Vec3::new(0.0, 0.0, 0.4), heading: 0.0, velocity: Vec3::new(v[0], v[1], 0.0) };
            let mut stepped = p;
            for _ in 0..n {
                stepped = platform_advance(&stepped, dt);
            }
            let once = platform_advance(&p, n as f64 * dt);
            prop_assert!((stepped.center - once.center).norm() < 1e-12 * (1.0 + once.center.norm()) * n as f64);
            prop_assert_eq!(stepped.center.z, 0.4);
        }
    }
}
