//! Downward camera, nested-marker landing pad and marker-based relative pose.

mod camera;
mod pad;
mod pnp;

pub use camera::{camera_pose_in_world, project_point, CameraIntrinsics, CameraMount, Pixel};
pub use pad::{corner_table, detect_markers, pad_pose_in_world, Detection, MarkerSpec, PadLayout, RangeBand};
pub use pnp::{apply_body_transform, estimate_relative_pose, reprojection_rms, RelativePoseEstimate, MAX_ITERATIONS, STEP_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("point is behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("no marker detections")]
    NoDetections,
    #[error("marker corners are degenerate; cannot initialize the pose")]
    DegenerateGeometry,
    #[error("pose refinement did not converge (rms {:.3} px)", .0.rms_px)]
    NotConverged(Box<RelativePoseEstimate>),
}
