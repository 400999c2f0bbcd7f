use super::config::ScenarioConfig;
use super::metrics::{compute_metrics, MetricSample, MetricsContext, SummaryMetrics};
use super::SimError;
use crate::geometry::{rotation_from_euler, EulerAngles, FramePose, Vec3};
use crate::mission::{mission_step, touchdown_check, MissionEvent, MissionOutput, MissionPhase, MissionState, PadTrack, TouchdownRecord};
use crate::perception::{detect_markers, estimate_relative_pose, PerceptionError, RelativePoseEstimate};
use crate::planner::{plan, BoundaryState, PlanRequest, UniformBSpline};
use crate::vehicle::{controller_update, estimate_state, integrate_step, ControllerState, RigidBodyState, Setpoint};
use crate::world::{grid_from_obstacles, platform_advance, OccupancyGrid, PlatformState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Pose fits worse than this are discarded, px.
const MAX_ACCEPTED_RMS_PX: f64 = 5.0;
/// Replans start from the current reference when the vehicle is this close to it, m.
const REFERENCE_CONTINUITY_RADIUS: f64 = 0.5;
/// Any coordinate beyond this counts as divergence, m.
const DIVERGENCE_LIMIT: f64 = 1e6;
/// Stream offset separating the camera noise from the estimator noise.
const CAMERA_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// State of one physics step, taken after integration. On the contact tick
/// the pre-contact state is logged so the touchdown speed is visible.
#[derive(Debug, Clone, PartialEq)]
pub struct TickLog {
    pub t: f64,
    pub truth: RigidBodyState,
    pub estimate: RigidBodyState,
    pub phase: MissionPhase,
    pub setpoint: Option<Setpoint>,
    pub pad: PlatformState,
    pub pad_estimate: Option<Vec3>,
    pub est_rms_px: Option<f64>,
    pub detected_ids: Vec<u32>,
    /// Wall-clock planning time on ticks where the planner ran, ms.
    pub plan_ms: Option<f64>,
}

impl TickLog {
    pub fn sample(&self) -> MetricSample {
        MetricSample {
            t: self.t,
            position: self.truth.position,
            velocity: self.truth.velocity,
            phase: self.phase,
            pad: self.pad.center,
            plan_ms: self.plan_ms,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub logs: Vec<TickLog>,
    pub metrics: SummaryMetrics,
    pub touchdown: Option<TouchdownRecord>,
    pub grid: OccupancyGrid,
}

impl RunResult {
    pub fn samples(&self) -> Vec<MetricSample> {
        self.logs.iter().map(TickLog::sample).collect()
    }
}

pub fn build_grid(config: &ScenarioConfig) -> Result<OccupancyGrid, SimError> {
    let w = &config.world;
    grid_from_obstacles(&w.obstacles, &w.bounds, w.resolution, w.inflation)
        .map_err(|e| SimError::ConfigInvalid { field: "world".into(), reason: e.to_string() })
}

impl ScenarioConfig {
    pub fn metrics_context(&self) -> MetricsContext {
        MetricsContext { touchdown_tolerance: self.mission.touchdown_tolerance, max_touchdown_speed: self.mission.max_touchdown_speed }
    }
}

/// Height and velocity of whatever surface lies under `p`: the platform deck
/// or the ground plane.
fn surface_under(p: &Vec3, platform: &PlatformState, deck_half: f64) -> (f64, Vec3) {
    let d = p.xy() - platform.center.xy();
    if d.x.abs() <= deck_half && d.y.abs() <= deck_half {
        (platform.center.z, Vec3::new(platform.velocity.x, platform.velocity.y, 0.0))
    } else {
        (0.0, Vec3::zeros())
    }
}

fn rest_on(state: &RigidBodyState, height: f64, velocity: Vec3) -> RigidBodyState {
    RigidBodyState {
        position: Vec3::new(state.position.x, state.position.y, height),
        velocity,
        attitude: EulerAngles::new(0.0, 0.0, state.attitude.yaw),
        body_rates: Vec3::zeros(),
    }
}

/// Pad center and heading in the world frame from a relative pose estimate
/// and the vehicle state estimate.
fn pad_in_world(est: &RigidBodyState, rel: &RelativePoseEstimate) -> (Vec3, f64) {
    let r = rotation_from_euler(&est.attitude);
    (est.position + r.apply(&rel.pad_in_body), est.attitude.yaw + rel.pad_yaw)
}

/// Reference trajectory being followed, with its start time.
struct ActiveTrajectory {
    spline: UniformBSpline,
    t0: f64,
}

impl ActiveTrajectory {
    /// Position, velocity and acceleration at sim time `t`; past the end the
    /// final velocity is extrapolated.
    fn state_at(&self, t: f64) -> BoundaryState {
        let end = self.spline.duration();
        let tau = (t - self.t0).clamp(0.0, end);
        let eval = |order| self.spline.evaluate(tau, order).expect("parameter clamped to the domain");
        let (p, v) = (eval(0), eval(1));
        if t - self.t0 > end {
            BoundaryState { position: p + v * (t - self.t0 - end), velocity: v, acceleration: Vec3::zeros() }
        } else {
            BoundaryState { position: p, velocity: v, acceleration: eval(2) }
        }
    }
}

/// Runs one scenario to `Landed` or the duration limit.
///
/// Per step: advance the platform clock, sample the noisy state estimate,
/// detect markers and estimate the pad pose on camera frames, step the
/// mission, plan when asked, run the controller, integrate, resolve ground
/// and deck contact, and log. Everything random comes from the scenario seed.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunResult, SimError> {
    config.validate()?;
    let grid = build_grid(config)?;
    let layout = config.pad.resolved_layout();
    let dt = config.dt;
    let steps = (config.duration / dt + 1e-9).floor() as u64;
    let camera_every = ((config.camera.period / dt).round() as u64).max(1);

    let mut est_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cam_rng = ChaCha8Rng::seed_from_u64(config.seed ^ CAMERA_STREAM);

    let mut truth = RigidBodyState::at_rest(config.start);
    truth.attitude.yaw = config.start_yaw;
    let mut platform = config.platform.initial_state();
    let mut ctrl = ControllerState::default();
    let mut mission = MissionState::new(0.0, &config.mission);
    let mut track: Option<PadTrack> = None;
    let mut last_fix: Option<FramePose> = None;
    let mut trajectory: Option<ActiveTrajectory> = None;
    let mut setpoint = Setpoint::hold(config.start, config.mission.yaw);
    let mut contact = false;
    let mut touchdown = None;
    let mut logs = Vec::with_capacity(steps as usize);

    for k in 0..steps {
        let t = k as f64 * dt;
        platform.velocity = config.platform.velocity_at(t);
        let est = estimate_state(&truth, &config.estimator_noise, &mut est_rng);

        // perception
        let mut detected_ids = Vec::new();
        let mut est_rms_px = None;
        let mut pad_estimate = None;
        if k % camera_every == 0 {
            let dets = detect_markers(
                &layout,
                &platform,
                &truth,
                &config.camera.mount,
                &config.camera.intrinsics,
                Some(&grid),
                config.camera.pixel_noise,
                &mut cam_rng,
            );
            detected_ids = dets.iter().map(|d| d.id).collect();
            let fit = match estimate_relative_pose(&dets, &layout, &config.camera.intrinsics, &config.camera.mount, last_fix.as_ref()) {
                Ok(e) => Some(e),
                Err(PerceptionError::NotConverged(e)) => Some(*e),
                Err(_) => None,
            };
            match fit.filter(|e| e.rms_px.is_finite() && e.rms_px <= MAX_ACCEPTED_RMS_PX) {
                Some(rel) => {
                    let (p, yaw) = pad_in_world(&est.state, &rel);
                    track = Some(PadTrack::update(track.as_ref(), p, yaw, t, &config.tracker));
                    last_fix = Some(rel.pad_to_camera);
                    est_rms_px = Some(rel.rms_px);
                    pad_estimate = Some(p);
                }
                None => last_fix = None,
            }
        }

        // mission
        let event = MissionEvent {
            land_command: config.land_command_at.is_some_and(|at| t >= at),
            abort: false,
            touchdown: contact,
        };
        let (next_mission, output) = mission_step(&mission, &est.state, track.as_ref(), &config.mission, &event, t);
        mission = next_mission;

        let mut plan_ms = None;
        match output {
            MissionOutput::Setpoint(sp) => {
                trajectory = None;
                setpoint = sp;
            }
            MissionOutput::Plan(goal) => {
                let start = match &trajectory {
                    Some(traj) => {
                        let s = traj.state_at(t);
                        if (s.position - est.state.position).norm() <= REFERENCE_CONTINUITY_RADIUS {
                            s
                        } else {
                            BoundaryState { position: est.state.position, velocity: est.state.velocity, acceleration: Vec3::zeros() }
                        }
                    }
                    None => BoundaryState { position: est.state.position, velocity: est.state.velocity, acceleration: Vec3::zeros() },
                };
                let request = PlanRequest {
                    start,
                    goal: goal.goal,
                    goal_velocity: goal.goal_velocity,
                    horizon: goal.horizon,
                    grid: &grid,
                    config: &config.planner,
                };
                let clock = config.planner.record_timing.then(Instant::now);
                let result = plan(&request);
                plan_ms = Some(clock.map_or(0.0, |c| c.elapsed().as_secs_f64() * 1e3));
                // a failed plan keeps the previous reference, or holds position
                match result {
                    Ok(r) => trajectory = Some(ActiveTrajectory { spline: r.trajectory, t0: t }),
                    Err(_) if trajectory.is_some() => {}
                    Err(_) => setpoint = Setpoint::hold(est.state.position, config.mission.yaw),
                }
            }
            MissionOutput::Follow | MissionOutput::Idle => {}
        }
        if let Some(traj) = &trajectory {
            if !matches!(output, MissionOutput::Setpoint(_)) {
                let s = traj.state_at(t);
                setpoint = Setpoint { position: s.position, velocity: s.velocity, yaw: config.mission.yaw };
            }
        }

        if mission.phase == MissionPhase::Landed {
            // motors off: the vehicle stays on the deck
            platform = platform_advance(&platform, dt);
            truth = rest_on(&truth, truth.position.z, Vec3::new(platform.velocity.x, platform.velocity.y, 0.0));
            truth.position.x += platform.velocity.x * dt;
            truth.position.y += platform.velocity.y * dt;
            logs.push(TickLog {
                t: t + dt,
                truth,
                estimate: est.state,
                phase: mission.phase,
                setpoint: None,
                pad: platform,
                pad_estimate,
                est_rms_px,
                detected_ids,
                plan_ms,
            });
            break;
        }

        // control and physics
        let (cmd, next_ctrl) = controller_update(&setpoint, &est, &config.gains, &config.vehicle, &ctrl, dt);
        ctrl = next_ctrl;
        let mut next = integrate_step(&truth, &cmd, &config.vehicle, dt)?;
        next.velocity += config.disturbance_force / config.vehicle.mass * dt;
        platform = platform_advance(&platform, dt);

        let (surface, surface_velocity) = surface_under(&next.position, &platform, config.pad.deck_half_size);
        let mut logged = next;
        if next.position.z <= surface && next.velocity.z - surface_velocity.z <= 0.0 {
            if mission.phase == MissionPhase::Land && !contact {
                contact = true;
                touchdown = Some(touchdown_check(&next, &platform, &config.mission));
            }
            next = rest_on(&next, surface, surface_velocity);
            if !contact {
                logged = next;
            }
        } else if contact {
            contact = false;
        }
        truth = next;

        let far = truth.position.iter().any(|x| x.abs() > DIVERGENCE_LIMIT);
        if !truth.is_finite() || far {
            return Err(SimError::SimulationDiverged { t: t + dt });
        }
        logs.push(TickLog {
            t: t + dt,
            truth: logged,
            estimate: est.state,
            phase: mission.phase,
            setpoint: Some(setpoint),
            pad: platform,
            pad_estimate,
            est_rms_px,
            detected_ids,
            plan_ms,
        });
    }

    let samples: Vec<MetricSample> = logs.iter().map(TickLog::sample).collect();
    let metrics = compute_metrics(&samples, &config.metrics_context())?;
    Ok(RunResult { logs, metrics, touchdown, grid })
}
