//! Nested-marker landing pad and the geometric detection model.

use super::camera::{camera_pose_in_world, CameraIntrinsics, CameraMount, Pixel};
use crate::geometry::{transform_point, FramePose, RotationMatrix, Vec3};
use crate::vehicle::RigidBodyState;
use crate::world::{OccupancyGrid, PlatformState};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Closed interval of camera-to-marker depth, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBand {
    pub lo: f64,
    pub hi: f64,
}

impl RangeBand {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, z: f64) -> bool {
        z > 0.0 && z >= self.lo && z <= self.hi
    }
}

/// One square marker lying flat on the pad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub id: u32,
    /// Edge length, meters.
    pub edge: f64,
    /// Marker center in the pad frame (pad plane is `z = 0`).
    pub center: Vec3,
    /// Marker rotation about the pad normal, rad.
    #[serde(default)]
    pub yaw: f64,
    /// Depth band in which the marker can be detected at all.
    pub max_z: RangeBand,
    /// Largest lateral `|x|`, `|y|` offset at which it can be detected.
    pub max_offset: f64,
    /// Depth band in which the marker is preferred for pose estimation.
    pub active_z: RangeBand,
    /// Lateral bound for the active band; `None` means no bound beyond `max_offset`.
    pub active_offset: Option<f64>,
}

impl MarkerSpec {
    pub fn pose(&self) -> FramePose {
        FramePose::new(RotationMatrix::about_z(self.yaw), self.center)
    }

    /// Corners in the pad frame, counter-clockwise starting at local `(-e/2, -e/2)`.
    pub fn corners(&self) -> [Vec3; 4] {
        let h = self.edge / 2.0;
        let pose = self.pose();
        [(-h, -h), (h, -h), (h, h), (-h, h)].map(|(x, y)| transform_point(&pose, &Vec3::new(x, y, 0.0)))
    }

    /// Detectability from the marker center's camera-frame coordinates.
    pub fn in_detection_range(&self, center_cam: &Vec3) -> bool {
        self.max_z.contains(center_cam.z) && center_cam.x.abs() <= self.max_offset && center_cam.y.abs() <= self.max_offset
    }

    /// Whether the marker lies in its preferred band for pose estimation.
    pub fn in_active_range(&self, center_cam: &Vec3) -> bool {
        if !self.in_detection_range(center_cam) || !self.active_z.contains(center_cam.z) {
            return false;
        }
        match self.active_offset {
            Some(off) => center_cam.x.abs() <= off && center_cam.y.abs() <= off,
            None => true,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            edge: self.edge * s,
            center: self.center * s,
            max_z: RangeBand::new(self.max_z.lo * s, self.max_z.hi * s),
            max_offset: self.max_offset * s,
            active_z: RangeBand::new(self.active_z.lo * s, self.active_z.hi * s),
            active_offset: self.active_offset.map(|o| o * s),
            ..self.clone()
        }
    }
}

/// Marker set of the pad. The pad frame has its origin at the center of
/// marker 43, `z` along the pad normal and `x` along the vehicle heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadLayout {
    pub markers: Vec<MarkerSpec>,
}

const CLUSTER_INNER: f64 = 0.06;
const CLUSTER_OUTER: f64 = 0.15;
const LARGE_MARKER_X: f64 = -0.40;

impl Default for PadLayout {
    /// Ten markers in four sizes: 43 (2.5 cm) at the center, 5-8 (6.4 cm) on
    /// the inner diagonals, 1-4 (9.5 cm) on the outer diagonals and 68
    /// (25.7 cm) behind the cluster. Range bands follow the measured
    /// detection table for these marker sizes.
    fn default() -> Self {
        let quadrants = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut markers = vec![MarkerSpec {
            id: 43,
            edge: 0.025,
            center: Vec3::zeros(),
            yaw: 0.0,
            max_z: RangeBand::new(0.0, 0.15),
            max_offset: 0.15,
            active_z: RangeBand::new(0.0, 0.15),
            active_offset: Some(0.15),
        }];
        for (k, (sx, sy)) in quadrants.iter().enumerate() {
            markers.push(MarkerSpec {
                id: 5 + k as u32,
                edge: 0.064,
                center: Vec3::new(sx * CLUSTER_INNER, sy * CLUSTER_INNER, 0.0),
                yaw: 0.0,
                max_z: RangeBand::new(0.0, 0.50),
                max_offset: 0.39,
                active_z: RangeBand::new(0.20, 0.30),
                active_offset: Some(0.39),
            });
        }
        for (k, (sx, sy)) in quadrants.iter().enumerate() {
            markers.push(MarkerSpec {
                id: 1 + k as u32,
                edge: 0.095,
                center: Vec3::new(sx * CLUSTER_OUTER, sy * CLUSTER_OUTER, 0.0),
                yaw: 0.0,
                max_z: RangeBand::new(0.0, 1.15),
                max_offset: 0.90,
                active_z: RangeBand::new(0.40, 1.00),
                active_offset: Some(0.70),
            });
        }
        markers.push(MarkerSpec {
            id: 68,
            edge: 0.257,
            center: Vec3::new(LARGE_MARKER_X, 0.0, 0.0),
            yaw: 0.0,
            max_z: RangeBand::new(0.0, 3.00),
            max_offset: 1.42,
            active_z: RangeBand::new(1.00, 3.00),
            active_offset: None,
        });
        Self { markers }
    }
}

impl PadLayout {
    /// Uniformly scaled copy. Detection ranges scale with marker size since
    /// the apparent size in pixels depends only on edge over distance.
    pub fn scaled(&self, s: f64) -> Self {
        Self { markers: self.markers.iter().map(|m| m.scaled(s)).collect() }
    }

    pub fn marker(&self, id: u32) -> Option<&MarkerSpec> {
        self.markers.iter().find(|m| m.id == id)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.markers.is_empty() {
            return Err("pad layout has no markers".into());
        }
        for (i, m) in self.markers.iter().enumerate() {
            if !(m.edge > 0.0) {
                return Err(format!("markers[{i}].edge must be > 0"));
            }
            if !(m.max_z.lo <= m.max_z.hi) || !(m.active_z.lo <= m.active_z.hi) {
                return Err(format!("markers[{i}]: range lower bound exceeds upper bound"));
            }
            if m.center.z != 0.0 {
                return Err(format!("markers[{i}].center must lie in the pad plane (z = 0)"));
            }
            if self.markers[..i].iter().any(|o| o.id == m.id) {
                return Err(format!("markers[{i}]: duplicate id {}", m.id));
            }
        }
        for (i, a) in self.markers.iter().enumerate() {
            for b in &self.markers[i + 1..] {
                if squares_overlap(a, b) {
                    return Err(format!("markers {} and {} overlap", a.id, b.id));
                }
            }
        }
        Ok(())
    }
}

/// Separating-axis test for two squares in the pad plane.
fn squares_overlap(a: &MarkerSpec, b: &MarkerSpec) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [ca[1] - ca[0], ca[3] - ca[0], cb[1] - cb[0], cb[3] - cb[0]];
    axes.iter().all(|axis| {
        let proj = |c: &[Vec3; 4]| {
            c.iter().map(|p| p.dot(axis)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (a0, a1) = proj(&ca);
        let (b0, b1) = proj(&cb);
        a1 > b0 && b1 > a0
    })
}

/// Pad pose in the world: pad frame to world frame.
pub fn pad_pose_in_world(platform: &PlatformState) -> FramePose {
    FramePose::new(RotationMatrix::about_z(platform.heading), platform.center)
}

/// One observed marker: four pixel corners and their pad-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: u32,
    pub corners_px: [Pixel; 4],
    pub corners_pad: [Vec3; 4],
}

/// Per-frame visibility, range gating and corner extraction.
///
/// A marker is reported iff its center is within its detection range in the
/// camera frame, the pad faces the camera, all four corners project inside
/// the image, and the line of sight to the marker center is clear in `grid`.
/// Corner pixels get independent zero-mean Gaussian noise of `pixel_sigma`.
#[allow(clippy::too_many_arguments)]
pub fn detect_markers<R: Rng + ?Sized>(
    layout: &PadLayout,
    platform: &PlatformState,
    uav: &RigidBodyState,
    mount: &CameraMount,
    intr: &CameraIntrinsics,
    grid: Option<&OccupancyGrid>,
    pixel_sigma: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let cam = camera_pose_in_world(uav, mount);
    let world_to_cam = cam.inverse();
    let pad = pad_pose_in_world(platform);
    let pad_to_cam = world_to_cam.compose(&pad);
    let pad_normal = pad.rotation.apply(&Vec3::z());
    if (cam.translation - pad.translation).dot(&pad_normal) <= 0.0 {
        return Vec::new();
    }
    let noise = (pixel_sigma > 0.0).then(|| Normal::new(0.0, pixel_sigma).expect("finite sigma"));

    let mut out = Vec::new();
    for m in &layout.markers {
        let center_cam = transform_point(&pad_to_cam, &m.center);
        if !m.in_detection_range(&center_cam) {
            continue;
        }
        let corners_pad = m.corners();
        let mut corners_px = [Pixel::zeros(); 4];
        let mut visible = true;
        for (k, c) in corners_pad.iter().enumerate() {
            match intr.project_camera_point(&transform_point(&pad_to_cam, c)) {
                Ok(px) if intr.contains(&px) => corners_px[k] = px,
                _ => {
                    visible = false;
                    break;
                }
            }
        }
        if !visible {
            continue;
        }
        if let Some(g) = grid {
            let center_world = transform_point(&pad, &m.center);
            if g.raycast(&cam.translation, &center_world).is_some() {
                continue;
            }
        }
        if let Some(n) = &noise {
            for px in corners_px.iter_mut() {
                px.x += n.sample(rng);
                px.y += n.sample(rng);
            }
        }
        out.push(Detection { id: m.id, corners_px, corners_pad });
    }
    out
}

/// Noiseless projected corners of every marker, without range gating.
/// Debug aid: rows for markers behind the camera carry `None`.
pub fn corner_table(
    layout: &PadLayout,
    platform: &PlatformState,
    uav: &RigidBodyState,
    mount: &CameraMount,
    intr: &CameraIntrinsics,
) -> Vec<(u32, Vec3, Option<[Pixel; 4]>)> {
    let cam = camera_pose_in_world(uav, mount);
    let pad_to_cam = cam.inverse().compose(&pad_pose_in_world(platform));
    layout
        .markers
        .iter()
        .map(|m| {
            let center_cam = transform_point(&pad_to_cam, &m.center);
            let corners = m.corners();
            let mut px = [Pixel::zeros(); 4];
            let mut ok = true;
            for (k, c) in corners.iter().enumerate() {
                match intr.project_camera_point(&transform_point(&pad_to_cam, c)) {
                    Ok(p) => px[k] = p,
                    Err(_) => ok = false,
                }
            }
            (m.id, center_cam, ok.then_some(px))
        })
        .collect()
}
