//! Frames, rotations and Euler-angle kinematics.
//!
//! Attitude uses the ZYX (yaw-pitch-roll) convention: the body-to-world
//! rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)`. The world frame is ENU with
//! gravity along `-z`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Three-vector in meters, m/s or rad/s depending on context.
pub type Vec3 = Vector3<f64>;

/// Smallest admissible `|cos(pitch)|` before Euler rates are considered singular.
pub const GIMBAL_COS_GUARD: f64 = 1e-6;

/// Largest admissible `|R31|` when extracting Euler angles.
pub const GIMBAL_R31_GUARD: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("gimbal lock: pitch too close to +/-90 degrees (guard value {0:e})")]
    GimbalLock(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles { roll: 0.0, pitch: 0.0, yaw: 0.0 };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Orthonormal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation about the world `z` axis.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Largest entry of `|R^T R - I|` together with `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        e.max((self.0.determinant() - 1.0).abs())
    }

    /// Angle of the relative rotation `self^T * other`, in radians.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        let rel = self.0.transpose() * other.0;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos loses precision near zero; the skew part is better conditioned there
        let s = 0.5
            * Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)])
                .norm();
        s.atan2(c)
    }
}

impl std::ops::Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl FramePose {
    pub fn identity() -> Self {
        Self { rotation: RotationMatrix::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: RotationMatrix, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: RotationMatrix::identity(), translation }
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &FramePose) -> FramePose {
        FramePose {
            rotation: self.rotation.compose(&inner.rotation),
            translation: self.rotation.apply(&inner.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> FramePose {
        let rt = self.rotation.transpose();
        FramePose { rotation: rt, translation: -rt.apply(&self.translation) }
    }
}

/// Body-to-world rotation for ZYX Euler angles.
pub fn rotation_from_euler(angles: &EulerAngles) -> RotationMatrix {
    let (sr, cr) = angles.roll.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    let (sy, cy) = angles.yaw.sin_cos();
    RotationMatrix(Matrix3::new(
        cp * cy,
        -cr * sy + sr * sp * cy,
        sr * sy + cr * sp * cy,
        cp * sy,
        cr * cy + sr * sp * sy,
        -sr * cy + cr * sp * sy,
        -sp,
        sr * cp,
        cr * cp,
    ))
}

pub fn euler_from_rotation(r: &RotationMatrix) -> Result<EulerAngles, GeometryError> {
    let m = r.matrix();
    let r31 = m[(2, 0)];
    if r31.abs() >= GIMBAL_R31_GUARD {
        return Err(GeometryError::GimbalLock(GIMBAL_R31_GUARD));
    }
    Ok(EulerAngles {
        roll: m[(2, 1)].atan2(m[(2, 2)]),
        pitch: (-r31).asin(),
        yaw: m[(1, 0)].atan2(m[(0, 0)]),
    })
}

/// Maps body rates to `(roll_dot, pitch_dot, yaw_dot)`.
pub fn euler_rates_from_body_rates(angles: &EulerAngles, omega: &Vec3) -> Result<Vec3, GeometryError> {
    let (sr, cr) = angles.roll.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    if cp.abs() <= GIMBAL_COS_GUARD {
        return Err(GeometryError::GimbalLock(GIMBAL_COS_GUARD));
    }
    let tp = sp / cp;
    let w = Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp);
    Ok(w * omega)
}

/// Inverse of [`euler_rates_from_body_rates`]; defined everywhere.
pub fn body_rates_from_euler_rates(angles: &EulerAngles, euler_rates: &Vec3) -> Vec3 {
    let (sr, cr) = angles.roll.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    let w_inv = Matrix3::new(1.0, 0.0, -sp, 0.0, cr, sr * cp, 0.0, -sr, cr * cp);
    w_inv * euler_rates
}

pub fn transform_point(pose: &FramePose, p: &Vec3) -> Vec3 {
    pose.rotation.apply(p) + pose.translation
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = rotation_from_euler(&EulerAngles::ZERO);
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn yaw_quarter_turn_maps_body_x_to_world_y() {
        let r = rotation_from_euler(&EulerAngles::new(0.0, 0.0, FRAC_PI_2));
        let col = r.matrix().column(0).into_owned();
        assert!((col - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_axis_roll_and_pitch_follow_zyx() {
        // roll rotates body y toward world z; pitch rotates body x toward world -z
        let r = rotation_from_euler(&EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert!((r * Vec3::y() - Vec3::z()).norm() < 1e-15);
        let p = rotation_from_euler(&EulerAngles::new(0.0, FRAC_PI_2, 0.0));
        assert!((p * Vec3::x() + Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn euler_from_identity_is_zero() {
        let a = euler_from_rotation(&RotationMatrix::identity()).unwrap();
        assert_eq!(a, EulerAngles::ZERO);
    }

    #[test]
    fn euler_round_trip_fixed_case() {
        let a = EulerAngles::new(0.1, 0.2, 0.3);
        let b = euler_from_rotation(&rotation_from_euler(&a)).unwrap();
        assert!((a.as_vec() - b.as_vec()).norm() < 1e-9);
    }

    #[test]
    fn euler_from_rotation_rejects_gimbal_lock() {
        let r = rotation_from_euler(&EulerAngles::new(0.0, FRAC_PI_2, 0.0));
        assert!((r.matrix()[(2, 0)] + 1.0).abs() < 1e-15);
        assert!(matches!(euler_from_rotation(&r), Err(GeometryError::GimbalLock(_))));
    }

    #[test]
    fn euler_rates_zero_input() {
        let a = EulerAngles::new(0.3, -0.4, 1.0);
        assert_eq!(euler_rates_from_body_rates(&a, &Vec3::zeros()).unwrap(), Vec3::zeros());
    }

    #[test]
    fn euler_rates_identity_when_level() {
        let w = Vec3::new(0.3, -1.2, 2.5);
        for yaw in [0.0, 1.0, -2.0] {
            let r = euler_rates_from_body_rates(&EulerAngles::new(0.0, 0.0, yaw), &w).unwrap();
            assert_eq!(r, w);
        }
    }

    #[test]
    fn euler_rates_gimbal_lock() {
        let a = EulerAngles::new(0.0, FRAC_PI_2, 0.0);
        assert!(matches!(
            euler_rates_from_body_rates(&a, &Vec3::new(1.0, 0.0, 0.0)),
            Err(GeometryError::GimbalLock(_))
        ));
    }

    #[test]
    fn transform_point_trivial_cases() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&FramePose::identity(), &p), p);
        let t = FramePose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(transform_point(&t, &p), Vec3::new(1.0, 2.0, 4.0));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI / 2.0 - 2.0 * PI) + PI / 2.0).abs() < 1e-12);
    }

    fn angles() -> impl Strategy<Value = EulerAngles> {
        (-PI..PI, -1.4..1.4f64, -PI..PI).prop_map(|(r, p, y)| EulerAngles::new(r, p, y))
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(r in -10.0..10.0f64, p in -10.0..10.0f64, y in -10.0..10.0f64) {
            let m = rotation_from_euler(&EulerAngles::new(r, p, y));
            prop_assert!(m.orthonormality_error() < 1e-9);
        }

        #[test]
        fn euler_round_trip(a in angles()) {
            let b = euler_from_rotation(&rotation_from_euler(&a)).unwrap();
            prop_assert!((a.as_vec() - b.as_vec()).norm() < 1e-9);
        }

        #[test]
        fn rotation_from_extracted_angles_reproduces_matrix(a in angles()) {
            let r = rotation_from_euler(&a);
            let r2 = rotation_from_euler(&euler_from_rotation(&r).unwrap());
            prop_assert!(close(r.matrix(), r2.matrix(), 1e-9));
        }

        #[test]
        fn composed_pose_matches_sequential_application(
            a in angles(), b in angles(),
            ta in prop::array::uniform3(-5.0..5.0f64),
            tb in prop::array::uniform3(-5.0..5.0f64),
            p in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let pa = FramePose::new(rotation_from_euler(&a), Vec3::from(ta));
            let pb = FramePose::new(rotation_from_euler(&b), Vec3::from(tb));
            let p = Vec3::from(p);
            let direct = transform_point(&pa.compose(&pb), &p);
            let sequential = transform_point(&pa, &transform_point(&pb, &p));
            prop_assert!((direct - sequential).norm() < 1e-12);
        }

        #[test]
        fn body_rate_inverse_is_consistent(a in angles(), w in prop::array::uniform3(-3.0..3.0f64)) {
            let w = Vec3::from(w);
            let rates = euler_rates_from_body_rates(&a, &w).unwrap();
            let back = body_rates_from_euler_rates(&a, &rates);
            prop_assert!((back - w).norm() < 1e-9);
        }
    }
}
