use super::PerceptionError;
use crate::geometry::{rotation_from_euler, FramePose, RotationMatrix, Vec3};
use crate::vehicle::RigidBodyState;
use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

pub type Pixel = Vector2<f64>;

/// Pinhole intrinsics `K = [[fx, skew, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 640x480 wide-angle camera, roughly 70 degrees horizontal field of view.
    fn default() -> Self {
        Self { fx: 460.0, fy: 460.0, cx: 320.0, cy: 240.0, skew: 0.0, width: 640, height: 480 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0) || !(self.fy > 0.0) {
            return Err("fx and fy must be > 0".into());
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64) || !(self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err("principal point must lie inside the image".into());
        }
        if !self.skew.is_finite() {
            return Err("skew must be finite".into());
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, pc: &Vec3) -> Result<Pixel, PerceptionError> {
        if !(pc.z > 1e-9) {
            return Err(PerceptionError::BehindCamera(pc.z));
        }
        let x = pc.x / pc.z;
        let y = pc.y / pc.z;
        Ok(Pixel::new(self.fx * x + self.skew * y + self.cx, self.fy * y + self.cy))
    }

    /// Inverse of the intrinsic map: pixel to normalized image coordinates.
    pub fn normalize(&self, px: &Pixel) -> Pixel {
        let y = (px.y - self.cy) / self.fy;
        let x = (px.x - self.cx - self.skew * y) / self.fx;
        Pixel::new(x, y)
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }
}

/// Camera mounting: `rotation` maps camera-frame vectors into the body frame
/// and `offset` is the known mount offset, expressed in the camera frame,
/// so that a camera-frame point `p` sits at body point `rotation * (p + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MountRepr", into = "MountRepr")]
pub struct CameraMount {
    pub rotation: RotationMatrix,
    pub offset: Vec3,
}

impl Default for CameraMount {
    /// Downward-looking camera 5 cm below the body origin; image `x` along body `x`.
    fn default() -> Self {
        Self {
            rotation: RotationMatrix::from_matrix_unchecked(Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)),
            offset: Vec3::new(0.0, 0.0, 0.05),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MountRepr {
    /// Row-major camera-to-body rotation.
    rotation: [[f64; 3]; 3],
    offset: Vec3,
}

impl TryFrom<MountRepr> for CameraMount {
    type Error = String;
    fn try_from(r: MountRepr) -> Result<Self, String> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        let rotation = RotationMatrix::from_matrix_unchecked(m);
        if !(rotation.orthonormality_error() < 1e-9) {
            return Err("camera mount rotation must be orthonormal with det +1".into());
        }
        Ok(Self { rotation, offset: r.offset })
    }
}

impl From<CameraMount> for MountRepr {
    fn from(m: CameraMount) -> Self {
        let r = m.rotation.matrix();
        Self { rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]), offset: m.offset }
    }
}

impl CameraMount {
    /// Camera origin expressed in the body frame.
    pub fn position_in_body(&self) -> Vec3 {
        self.rotation.apply(&self.offset)
    }

    /// Camera-to-body transform.
    pub fn camera_to_body(&self) -> FramePose {
        FramePose::new(self.rotation, self.position_in_body())
    }
}

/// Camera-to-world pose for a vehicle state.
pub fn camera_pose_in_world(uav: &RigidBodyState, mount: &CameraMount) -> FramePose {
    let body = FramePose::new(rotation_from_euler(&uav.attitude), uav.position);
    body.compose(&mount.camera_to_body())
}

/// Pinhole projection of a world point seen from `camera_to_world`.
pub fn project_point(intr: &CameraIntrinsics, camera_to_world: &FramePose, p_world: &Vec3) -> Result<Pixel, PerceptionError> {
    let pc = camera_to_world.rotation.transpose().apply(&(p_world - camera_to_world.translation));
    intr.project_camera_point(&pc)
}
