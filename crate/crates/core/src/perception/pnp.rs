//! Relative pose of the pad from marker corners: planar homography
//! initialization followed by damped Gauss-Newton on the reprojection error.

use super::camera::{CameraIntrinsics, CameraMount, Pixel};
use super::pad::{Detection, PadLayout};
use super::PerceptionError;
use crate::geometry::{transform_point, FramePose, RotationMatrix, Vec3};
use nalgebra::{Matrix3, Matrix6, Rotation3, SMatrix, SVector, Vector6};

pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RelativePoseEstimate {
    /// Pad center expressed in the UAV body frame, meters.
    pub pad_in_body: Vec3,
    /// Pad heading relative to the body `x` axis, rad.
    pub pad_yaw: f64,
    /// Root-mean-square corner reprojection error over the corners used, px.
    pub rms_px: f64,
    pub markers_used: usize,
    /// Pad-to-camera transform `(R_M^C, t_M^C)`.
    pub pad_to_camera: FramePose,
    pub iterations: usize,
}

/// `P^b = R_C^B ((R_M^C P^m + t_M^C) + Offset^c)`.
pub fn apply_body_transform(p_pad: &Vec3, r_pad_cam: &RotationMatrix, t_pad_cam: &Vec3, mount: &CameraMount) -> Vec3 {
    mount.rotation.apply(&((r_pad_cam.apply(p_pad) + t_pad_cam) + mount.offset))
}

type Correspondence = (Vec3, Pixel);

fn correspondences<'a>(detections: impl Iterator<Item = &'a Detection>) -> Vec<Correspondence> {
    detections.flat_map(|d| d.corners_pad.iter().copied().zip(d.corners_px.iter().copied())).collect()
}

/// Root-mean-square reprojection error of `pose` over the correspondences.
pub fn reprojection_rms(points: &[(Vec3, Pixel)], pose: &FramePose, intr: &CameraIntrinsics) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|(pm, obs)| match intr.project_camera_point(&transform_point(pose, pm)) {
            Ok(px) => (px - obs).norm_squared(),
            Err(_) => f64::INFINITY,
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}

fn sum_squared(points: &[Correspondence], pose: &FramePose, intr: &CameraIntrinsics) -> f64 {
    let r = reprojection_rms(points, pose, intr);
    r * r * points.len() as f64
}

/// Homography from pad-plane points to normalized image points, decomposed
/// into a rotation and translation. Requires at least four non-collinear
/// points on `z = 0`.
fn homography_pose(points: &[Correspondence], intr: &CameraIntrinsics) -> Option<FramePose> {
    if points.len() < 4 {
        return None;
    }
    let src: Vec<(f64, f64)> = points.iter().map(|(p, _)| (p.x, p.y)).collect();
    let dst: Vec<(f64, f64)> = points
        .iter()
        .map(|(_, px)| {
            let n = intr.normalize(px);
            (n.x, n.y)
        })
        .collect();
    let (ts, src_n) = hartley(&src)?;
    let (td, dst_n) = hartley(&dst)?;

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for ((x, y), (u, v)) in src_n.iter().zip(&dst_n) {
        let r1 = SVector::<f64, 9>::from_column_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, *u]);
        let r2 = SVector::<f64, 9>::from_column_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, *v]);
        ata += r1 * r1.transpose() + r2 * r2.transpose();
    }
    let eig = ata.symmetric_eigen();
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = eig.eigenvectors.column(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let hm = td.try_inverse()? * hn * ts;

    let h1 = hm.column(0).into_owned();
    let h2 = hm.column(1).into_owned();
    let h3 = hm.column(2).into_owned();
    let mut scale = 2.0 / (h1.norm() + h2.norm());
    if h3.z * scale < 0.0 {
        scale = -scale;
    }
    let r1 = h1 * scale;
    let r2 = h2 * scale;
    let approx = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    let svd = approx.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    Some(FramePose::new(RotationMatrix::from_matrix_unchecked(r), h3 * scale))
}

/// Similarity that moves the centroid to the origin with mean distance sqrt(2).
fn hartley(pts: &[(f64, f64)]) -> Option<(Matrix3<f64>, Vec<(f64, f64)>)> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts.iter().map(|(x, y)| (x - mx).hypot(y - my)).sum::<f64>() / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0);
    Some((t, pts.iter().map(|(x, y)| (s * (x - mx), s * (y - my))).collect()))
}

struct Refined {
    pose: FramePose,
    iterations: usize,
    converged: bool,
}

/// Levenberg-damped Gauss-Newton over the pad-to-camera pose with a
/// left-multiplied rotation increment.
fn refine(points: &[Correspondence], intr: &CameraIntrinsics, init: FramePose) -> Refined {
    let mut pose = init;
    let mut cost = sum_squared(points, &pose, intr);
    let mut damping = 0.0f64;
    for it in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for (pm, obs) in points {
            let rotated = pose.rotation.apply(pm);
            let pc = rotated + pose.translation;
            let (x, y, z) = (pc.x, pc.y, pc.z);
            let Ok(px) = intr.project_camera_point(&pc) else {
                continue;
            };
            let r = px - obs;
            let dproj = SMatrix::<f64, 2, 3>::new(
                intr.fx / z,
                intr.skew / z,
                -(intr.fx * x + intr.skew * y) / (z * z),
                0.0,
                intr.fy / z,
                -intr.fy * y / (z * z),
            );
            // d pc / d(theta) = -[R p]x ; d pc / d t = I
            let skew = Matrix3::new(0.0, -rotated.z, rotated.y, rotated.z, 0.0, -rotated.x, -rotated.y, rotated.x, 0.0);
            let mut jp = SMatrix::<f64, 3, 6>::zeros();
            jp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew));
            jp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = dproj * jp;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        loop {
            let mut lhs = jtj;
            for k in 0..6 {
                lhs[(k, k)] += damping * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = lhs.cholesky() else {
                damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
                if damping > 1e12 {
                    return Refined { pose, iterations: it, converged: false };
                }
                continue;
            };
            let step = -chol.solve(&jtr);
            let dtheta = Vec3::new(step[0], step[1], step[2]);
            let dt = Vec3::new(step[3], step[4], step[5]);
            let rot = Rotation3::new(dtheta).into_inner() * pose.rotation.matrix();
            let candidate = FramePose::new(RotationMatrix::from_matrix_unchecked(rot), pose.translation + dt);
            let new_cost = sum_squared(points, &candidate, intr);
            let small = step.norm() < STEP_TOLERANCE;
            if new_cost <= cost {
                pose = candidate;
                cost = new_cost;
                damping = if damping <= 1e-6 { 0.0 } else { damping / 10.0 };
                if small {
                    return Refined { pose, iterations: it, converged: true };
                }
                break;
            }
            if small {
                // already at the floating-point floor of the minimum
                return Refined { pose, iterations: it, converged: true };
            }
            damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
            if damping > 1e12 {
                return Refined { pose, iterations: it, converged: false };
            }
        }
    }
    Refined { pose, iterations: MAX_ITERATIONS, converged: false }
}

fn finish(
    refined: &Refined,
    points: &[Correspondence],
    markers_used: usize,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
) -> RelativePoseEstimate {
    let pose = refined.pose;
    let pad_in_body = apply_body_transform(&Vec3::zeros(), &pose.rotation, &pose.translation, mount);
    let r_pad_body = mount.rotation.compose(&pose.rotation);
    let m = r_pad_body.matrix();
    RelativePoseEstimate {
        pad_in_body,
        pad_yaw: m[(1, 0)].atan2(m[(0, 0)]),
        rms_px: reprojection_rms(points, &pose, intr),
        markers_used,
        pad_to_camera: pose,
        iterations: refined.iterations,
    }
}

/// Pose of the pad relative to the UAV body.
///
/// All detected corners seed the solve. Markers whose estimated camera-frame
/// position lies in their active band are then preferred: when at least one
/// qualifies, the final solve uses only those markers.
pub fn estimate_relative_pose(
    detections: &[Detection],
    layout: &PadLayout,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
    initial: Option<&FramePose>,
) -> Result<RelativePoseEstimate, PerceptionError> {
    if detections.is_empty() {
        return Err(PerceptionError::NoDetections);
    }
    let all = correspondences(detections.iter());
    let init = match initial {
        Some(p) => *p,
        None => homography_pose(&all, intr).ok_or(PerceptionError::DegenerateGeometry)?,
    };
    let mut refined = refine(&all, intr, init);
    let mut used_points = all;
    let mut used_markers = detections.len();

    let active: Vec<&Detection> = detections
        .iter()
        .filter(|d| {
            layout
                .marker(d.id)
                .is_some_and(|m| m.in_active_range(&transform_point(&refined.pose, &m.center)))
        })
        .collect();
    if !active.is_empty() && active.len() < detections.len() {
        let pts = correspondences(active.iter().copied());
        refined = refine(&pts, intr, refined.pose);
        used_points = pts;
        used_markers = active.len();
    }

    let estimate = finish(&refined, &used_points, used_markers, intr, mount);
    if refined.converged {
        Ok(estimate)
    } else {
        Err(PerceptionError::NotConverged(Box::new(estimate)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_from_euler, EulerAngles};
    use crate::perception::camera::camera_pose_in_world;
    use crate::perception::pad::{detect_markers, pad_pose_in_world};
    use crate::vehicle::RigidBodyState;
    use crate::world::PlatformState;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn platform() -> PlatformState {
        PlatformState { center: Vec3::new(0.3, -0.2, 0.4), heading: 0.35, velocity: Vec3::zeros() }
    }

    fn truth_pad_to_camera(uav: &RigidBodyState, mount: &CameraMount) -> FramePose {
        camera_pose_in_world(uav, mount).inverse().compose(&pad_pose_in_world(&platform()))
    }

    fn truth_pad_in_body(uav: &RigidBodyState) -> Vec3 {
        let r = rotation_from_euler(&uav.attitude);
        r.transpose().apply(&(platform().center - uav.position))
    }

    fn detect(uav: &RigidBodyState, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Detection> {
        detect_markers(&PadLayout::default(), &platform(), uav, &CameraMount::default(), &CameraIntrinsics::default(), None, sigma, rng)
    }

    #[test]
    fn empty_detections_rejected() {
        let err = estimate_relative_pose(&[], &PadLayout::default(), &CameraIntrinsics::default(), &CameraMount::default(), None);
        assert!(matches!(err, Err(PerceptionError::NoDetections)));
    }

    #[test]
    fn body_transform_identity_and_translation() {
        let identity_mount = CameraMount { rotation: RotationMatrix::identity(), offset: Vec3::zeros() };
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(apply_body_transform(&p, &RotationMatrix::identity(), &Vec3::zeros(), &identity_mount), p);
        let mount = CameraMount { rotation: RotationMatrix::identity(), offset: Vec3::new(0.0, 0.1, 0.0) };
        let out = apply_body_transform(&p, &RotationMatrix::identity(), &Vec3::new(0.0, 0.0, 1.0), &mount);
        assert!((out - Vec3::new(1.0, 2.1, 4.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn body_transform_matches_pose_composition(
            a in prop::array::uniform3(-3.0..3.0f64),
            b in prop::array::uniform3(-3.0..3.0f64),
            t in prop::array::uniform3(-3.0..3.0f64),
            off in prop::array::uniform3(-0.2..0.2f64),
            p in prop::array::uniform3(-1.0..1.0f64),
        ) {
            let r_mc = rotation_from_euler(&EulerAngles::new(a[0], a[1] * 0.4, a[2]));
            let r_cb = rotation_from_euler(&EulerAngles::new(b[0], b[1] * 0.4, b[2]));
            let mount = CameraMount { rotation: r_cb, offset: Vec3::from(off) };
            let t = Vec3::from(t);
            let p = Vec3::from(p);
            let direct = apply_body_transform(&p, &r_mc, &t, &mount);
            // camera-to-body then pad-to-camera, with the offset folded in as a camera-frame shift
            let composed = FramePose::new(r_cb, Vec3::zeros())
                .compose(&FramePose::from_translation(Vec3::from(off)))
                .compose(&FramePose::new(r_mc, t));
            prop_assert!((direct - transform_point(&composed, &p)).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_recovery_single_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let uav = RigidBodyState {
            position: Vec3::new(0.5, -0.1, 1.5),
            attitude: EulerAngles::new(0.05, -0.08, 1.1),
            ..Default::default()
        };
        let det = detect(&uav, 0.0, &mut rng);
        assert!(!det.is_empty());
        let est = estimate_relative_pose(&det, &PadLayout::default(), &CameraIntrinsics::default(), &CameraMount::default(), None).unwrap();
        assert!((est.pad_in_body - truth_pad_in_body(&uav)).norm() < 1e-6);
        let truth = truth_pad_to_camera(&uav, &CameraMount::default());
        assert!(est.pad_to_camera.rotation.angle_to(&truth.rotation) < 1e-6);
        assert!(est.rms_px < 1e-6);
        // pad x axis seen from the body frame
        let pad_x_world = Vec3::new(platform().heading.cos(), platform().heading.sin(), 0.0);
        let pad_x_body = rotation_from_euler(&uav.attitude).transpose().apply(&pad_x_world);
        let expected_yaw = pad_x_body.y.atan2(pad_x_body.x);
        assert!((crate::geometry::wrap_angle(est.pad_yaw - expected_yaw)).abs() < 1e-9);
    }

    #[test]
    fn reported_rms_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = PadLayout::default();
        for _ in 0..20 {
            let uav = RigidBodyState {
                position: Vec3::new(rng.random_range(-0.3..0.9), rng.random_range(-0.6..0.4), rng.random_range(1.0..2.5)),
                attitude: EulerAngles::new(0.0, 0.0, rng.random_range(-3.0..3.0)),
                ..Default::default()
            };
            let det = detect(&uav, 0.7, &mut rng);
            if det.is_empty() {
                continue;
            }
            let est = estimate_relative_pose(&det, &layout, &CameraIntrinsics::default(), &CameraMount::default(), None).unwrap();
            // independent recomputation over the markers the estimator reports as used
            let used: Vec<&Detection> = if est.markers_used == det.len() {
                det.iter().collect()
            } else {
                det.iter()
                    .filter(|d| {
                        let m = layout.marker(d.id).unwrap();
                        m.in_active_range(&transform_point(&est.pad_to_camera, &m.center))
                    })
                    .collect()
            };
            assert_eq!(used.len(), est.markers_used);
            let mut sum = 0.0;
            let mut n = 0;
            for d in used {
                for k in 0..4 {
                    let pc = transform_point(&est.pad_to_camera, &d.corners_pad[k]);
                    let u = 460.0 * pc.x / pc.z + 320.0;
                    let v = 460.0 * pc.y / pc.z + 240.0;
                    sum += (u - d.corners_px[k].x).powi(2) + (v - d.corners_px[k].y).powi(2);
                    n += 1;
                }
            }
            assert!(((sum / n as f64).sqrt() - est.rms_px).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_one_meter_median_error_within_two_centimeters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let uav = RigidBodyState::at_rest(Vec3::new(0.3, -0.2, 0.4 + 1.05));
        let truth = truth_pad_in_body(&uav);
        let mut errors: Vec<f64> = (0..200)
            .map(|_| {
                let det = detect(&uav, 0.5, &mut rng);
                assert!(det.iter().any(|d| (1..=4).contains(&d.id)));
                let est = estimate_relative_pose(&det, &PadLayout::default(), &CameraIntrinsics::default(), &CameraMount::default(), None)
                    .unwrap();
                (est.pad_in_body - truth).norm()
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        let median = errors[100];
        assert!(median <= 0.02, "median {median}");
    }

    #[test]
    fn more_markers_never_break_noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let uav = RigidBodyState::at_rest(Vec3::new(0.3, -0.2, 0.4 + 0.8));
        let det = detect(&uav, 0.0, &mut rng);
        assert!(det.len() >= 2);
        let truth = truth_pad_in_body(&uav);
        for k in 1..=det.len() {
            let est = estimate_relative_pose(&det[..k], &PadLayout::default(), &CameraIntrinsics::default(), &CameraMount::default(), None)
                .unwrap();
            assert!((est.pad_in_body - truth).norm() <= 1e-6, "k={k}");
        }
    }

    #[test]
    fn warm_start_from_previous_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let uav = RigidBodyState::at_rest(Vec3::new(0.1, 0.0, 2.0));
        let det = detect(&uav, 0.0, &mut rng);
        let truth = truth_pad_to_camera(&uav, &CameraMount::default());
        let guess = FramePose::new(truth.rotation, truth.translation + Vec3::new(0.05, -0.05, 0.1));
        let est = estimate_relative_pose(&det, &PadLayout::default(), &CameraIntrinsics::default(), &CameraMount::default(), Some(&guess))
            .unwrap();
        assert!((est.pad_to_camera.translation - truth.translation).norm() < 1e-6);
    }
}
