//! Take-off, tracking and landing state machine.
//!
//! The phase graph is
//! `Takeoff -> Hover -> Track -> Descend -> Land -> Landed`, with
//! `Track -> Hover` and `Descend -> Hover` on loss of the pad and an abort
//! edge from every airborne phase to `Hover`. `Landed` is absorbing.

use crate::geometry::{wrap_angle, Vec3};
use crate::vehicle::{RigidBodyState, Setpoint};
use crate::world::PlatformState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissionPhase {
    Takeoff,
    Hover,
    Track,
    Descend,
    Land,
    Landed,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 6] = [Self::Takeoff, Self::Hover, Self::Track, Self::Descend, Self::Land, Self::Landed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Takeoff => "Takeoff",
            Self::Hover => "Hover",
            Self::Track => "Track",
            Self::Descend => "Descend",
            Self::Land => "Land",
            Self::Landed => "Landed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Whether `self -> next` is an edge of the phase graph (self-loops allowed).
    pub fn can_transition(self, next: MissionPhase) -> bool {
        use MissionPhase::*;
        self == next
            || matches!(
                (self, next),
                (Takeoff, Hover)
                    | (Hover, Track)
                    | (Track, Descend)
                    | (Descend, Land)
                    | (Land, Landed)
                    | (Track, Hover)
                    | (Descend, Hover)
                    | (Land, Hover)
            )
    }
}

impl std::fmt::Display for MissionPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    /// Point the vehicle climbs to before waiting for the pad, m.
    pub preset_point: Vec3,
    /// m
    pub capture_radius: f64,
    /// s
    pub detection_timeout: f64,
    /// Cumulative tracked distance that starts the descent; `None` waits for
    /// an external land command.
    pub track_distance: Option<f64>,
    /// Height above the pad held while tracking, m.
    pub track_height: f64,
    /// Intermediate descent height above the pad, m.
    pub descend_height: f64,
    /// Height above the pad below which the final landing starts, m.
    pub land_height: f64,
    /// Largest horizontal offset from the pad center accepted at touchdown, m.
    pub touchdown_tolerance: f64,
    /// Largest descent speed accepted at touchdown, m/s.
    pub max_touchdown_speed: f64,
    /// Vertical speed commanded during the final landing, m/s.
    pub land_speed: f64,
    /// s
    pub replan_period: f64,
    /// Nominal speed used to size plan horizons, m/s.
    pub cruise_speed: f64,
    /// Shortest plan horizon, s.
    pub min_horizon: f64,
    /// Fly the climb to the preset point with planned trajectories instead of
    /// a direct position setpoint (needed when obstacles block the direct line).
    pub plan_takeoff_transit: bool,
    pub yaw: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            preset_point: Vec3::new(0.0, 0.0, 1.5),
            capture_radius: 0.2,
            detection_timeout: 1.0,
            track_distance: Some(2.5),
            track_height: 1.2,
            descend_height: 0.6,
            land_height: 0.2,
            touchdown_tolerance: 0.3,
            max_touchdown_speed: 0.5,
            land_speed: 0.3,
            replan_period: 0.5,
            cruise_speed: 1.0,
            min_horizon: 1.0,
            plan_takeoff_transit: false,
            yaw: 0.0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("capture_radius", self.capture_radius),
            ("detection_timeout", self.detection_timeout),
            ("track_height", self.track_height),
            ("descend_height", self.descend_height),
            ("land_height", self.land_height),
            ("touchdown_tolerance", self.touchdown_tolerance),
            ("max_touchdown_speed", self.max_touchdown_speed),
            ("land_speed", self.land_speed),
            ("replan_period", self.replan_period),
            ("cruise_speed", self.cruise_speed),
            ("min_horizon", self.min_horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        if !(self.land_height < self.descend_height) {
            return Err("land_height must be < descend_height".into());
        }
        if let Some(d) = self.track_distance {
            if !(d > 0.0 && d.is_finite()) {
                return Err("track_distance must be finite and > 0".into());
            }
        }
        if !self.preset_point.iter().all(|x| x.is_finite()) {
            return Err("preset_point must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionEvent {
    pub land_command: bool,
    pub abort: bool,
    /// Contact with a surface reported by the simulator.
    pub touchdown: bool,
}

/// World-frame pad track fed by relative pose estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadTrack {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub last_update: f64,
}

/// Alpha-beta filter gains for the pad track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerGains {
    pub alpha: f64,
    pub beta: f64,
    /// Gap after which the track restarts from the next measurement, s.
    pub reset_after: f64,
}

impl Default for TrackerGains {
    fn default() -> Self {
        Self { alpha: 0.4, beta: 0.05, reset_after: 2.0 }
    }
}

impl PadTrack {
    pub fn new(position: Vec3, yaw: f64, t: f64) -> Self {
        Self { position, velocity: Vec3::zeros(), yaw, last_update: t }
    }

    /// Constant-velocity prediction to time `t`.
    pub fn predict(&self, t: f64) -> Vec3 {
        self.position + self.velocity * (t - self.last_update).max(0.0)
    }

    pub fn is_fresh(&self, t: f64, timeout: f64) -> bool {
        t - self.last_update <= timeout
    }

    /// Folds in a world-frame measurement taken at `t`.
    pub fn update(track: Option<&PadTrack>, measured: Vec3, yaw: f64, t: f64, gains: &TrackerGains) -> PadTrack {
        let Some(prev) = track else {
            return PadTrack::new(measured, yaw, t);
        };
        let dt = t - prev.last_update;
        if !(dt > 0.0) || dt > gains.reset_after {
            return if dt > gains.reset_after { PadTrack::new(measured, yaw, t) } else { *prev };
        }
        let predicted = prev.position + prev.velocity * dt;
        let residual = measured - predicted;
        PadTrack {
            position: predicted + residual * gains.alpha,
            velocity: prev.velocity + residual * (gains.beta / dt),
            yaw: wrap_angle(prev.yaw + gains.alpha * wrap_angle(yaw - prev.yaw)),
            last_update: t,
        }
    }
}

/// Target handed to the planner; the caller supplies the start state and grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanGoal {
    pub goal: Vec3,
    pub goal_velocity: Vec3,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissionOutput {
    /// Fly to and hold this setpoint.
    Setpoint(Setpoint),
    /// Plan a new reference trajectory.
    Plan(PlanGoal),
    /// Keep following the current reference trajectory.
    Follow,
    /// Motors off; the vehicle rests on a surface.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionState {
    pub phase: MissionPhase,
    pub phase_since: f64,
    pub last_plan: Option<f64>,
    /// Distance flown in `Track`, m, sampled at the replanning cadence so
    /// estimator noise does not accumulate into it.
    pub tracked_distance: f64,
    pub last_position: Option<Vec3>,
    pub hover_point: Vec3,
}

impl MissionState {
    pub fn new(t: f64, config: &MissionConfig) -> Self {
        Self {
            phase: MissionPhase::Takeoff,
            phase_since: t,
            last_plan: None,
            tracked_distance: 0.0,
            last_position: None,
            hover_point: config.preset_point,
        }
    }

    fn enter(&self, phase: MissionPhase, t: f64) -> Self {
        Self { phase, phase_since: t, last_plan: None, ..*self }
    }
}

fn plan_goal(uav: &Vec3, target: Vec3, velocity: Vec3, config: &MissionConfig) -> PlanGoal {
    // size the horizon on the current gap, then aim at where the pad will be
    let horizon = ((target - uav).norm() / config.cruise_speed).max(config.min_horizon);
    let goal = target + Vec3::new(velocity.x, velocity.y, 0.0) * horizon;
    let horizon = ((goal - uav).norm() / config.cruise_speed).max(config.min_horizon);
    PlanGoal { goal, goal_velocity: Vec3::new(velocity.x, velocity.y, 0.0), horizon }
}

fn replan_due(state: &MissionState, t: f64, config: &MissionConfig) -> bool {
    state.last_plan.is_none_or(|last| t - last >= config.replan_period - 1e-9)
}

/// One tick of the state machine. `uav` is the vehicle state estimate and
/// `pad` the current pad track, if any.
pub fn mission_step(
    state: &MissionState,
    uav: &RigidBodyState,
    pad: Option<&PadTrack>,
    config: &MissionConfig,
    event: &MissionEvent,
    t: f64,
) -> (MissionState, MissionOutput) {
    use MissionPhase::*;
    let p = uav.position;
    let mut next = *state;
    if state.phase == Landed {
        return (next, MissionOutput::Idle);
    }
    if event.touchdown && state.phase == Land {
        return (state.enter(Landed, t), MissionOutput::Idle);
    }
    if event.abort {
        let mut s = state.enter(Hover, t);
        if state.phase != Hover {
            s.hover_point = p;
        }
        return (s, MissionOutput::Setpoint(Setpoint::hold(s.hover_point, config.yaw)));
    }
    let fresh = pad.filter(|tr| tr.is_fresh(t, config.detection_timeout));

    // phase changes
    match state.phase {
        Takeoff => {
            if (p - config.preset_point).norm() < config.capture_radius {
                next = state.enter(Hover, t);
                next.hover_point = config.preset_point;
            }
        }
        Hover => {
            if fresh.is_some() {
                next = state.enter(Track, t);
                next.tracked_distance = 0.0;
                next.last_position = Some(p);
            }
        }
        Track => {
            if replan_due(state, t, config) {
                if let Some(last) = state.last_position {
                    next.tracked_distance += (p - last).norm();
                }
                next.last_position = Some(p);
            }
            if fresh.is_none() {
                next = next.enter(Hover, t);
                next.hover_point = p;
            } else if event.land_command || config.track_distance.is_some_and(|d| next.tracked_distance >= d) {
                next = next.enter(Descend, t);
            }
        }
        Descend => match fresh {
            None => {
                next = state.enter(Hover, t);
                next.hover_point = p;
            }
            Some(tr) => {
                let pad_now = tr.predict(t);
                let height = p.z - pad_now.z;
                let offset = (p.xy() - pad_now.xy()).norm();
                if height < config.land_height && offset < config.touchdown_tolerance {
                    next = state.enter(Land, t);
                }
            }
        },
        Land | Landed => {}
    }

    // output for the (possibly new) phase
    let output = match next.phase {
        Takeoff => {
            if config.plan_takeoff_transit {
                if replan_due(&next, t, config) {
                    next.last_plan = Some(t);
                    MissionOutput::Plan(plan_goal(&p, config.preset_point, Vec3::zeros(), config))
                } else {
                    MissionOutput::Follow
                }
            } else {
                MissionOutput::Setpoint(Setpoint::hold(config.preset_point, config.yaw))
            }
        }
        Hover => MissionOutput::Setpoint(Setpoint::hold(next.hover_point, config.yaw)),
        Track | Descend => {
            let tr = fresh.expect("tracking phases hold a fresh pad track");
            if replan_due(&next, t, config) {
                next.last_plan = Some(t);
                let pad_now = tr.predict(t);
                let height = if next.phase == Track {
                    config.track_height
                } else if p.z - pad_now.z > config.descend_height + config.capture_radius {
                    config.descend_height
                } else {
                    0.5 * config.land_height
                };
                MissionOutput::Plan(plan_goal(&p, pad_now + Vec3::new(0.0, 0.0, height), tr.velocity, config))
            } else {
                MissionOutput::Follow
            }
        }
        Land => {
            // constant-rate vertical descent over the predicted pad center
            let (xy, v) = match pad {
                Some(tr) => (tr.predict(t), tr.velocity),
                None => (p, Vec3::zeros()),
            };
            MissionOutput::Setpoint(Setpoint {
                position: Vec3::new(xy.x, xy.y, p.z),
                velocity: Vec3::new(v.x, v.y, -config.land_speed),
                yaw: config.yaw,
            })
        }
        Landed => MissionOutput::Idle,
    };
    (next, output)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchdownRecord {
    pub success: bool,
    /// Horizontal distance between vehicle and pad center, m.
    pub horizontal_offset: f64,
    /// Downward speed relative to the pad at contact, m/s.
    pub descent_speed: f64,
    pub position: Vec3,
    pub pad_center: Vec3,
}

/// Landing outcome: success iff the offset is within the tolerance
/// (inclusive) and the contact was gentle enough.
pub fn touchdown_check(uav: &RigidBodyState, platform: &PlatformState, config: &MissionConfig) -> TouchdownRecord {
    let horizontal_offset = (uav.position.xy() - platform.center.xy()).norm();
    let descent_speed = (platform.velocity.z - uav.velocity.z).max(0.0);
    TouchdownRecord {
        success: horizontal_offset <= config.touchdown_tolerance && descent_speed <= config.max_touchdown_speed,
        horizontal_offset,
        descent_speed,
        position: uav.position,
        pad_center: platform.center,
    }
}
