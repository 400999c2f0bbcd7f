use super::SimError;
use crate::geometry::Vec3;
use crate::mission::{MissionConfig, TrackerGains};
use crate::perception::{CameraIntrinsics, CameraMount, PadLayout};
use crate::planner::{plan, BoundaryState, PlanRequest, PlanResult, PlannerConfig};
use crate::vehicle::{ControllerGains, NoiseConfig, VehicleParams};
use crate::world::{grid_from_obstacles, GridBounds, Obstacle, PlatformPath};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub bounds: GridBounds,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Grid cell edge, m.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Obstacle inflation radius, m.
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

fn default_resolution() -> f64 {
    0.15
}

fn default_inflation() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadConfig {
    /// Uniform scale applied to the default marker layout; ignored when
    /// `layout` is given.
    pub scale: f64,
    pub layout: Option<PadLayout>,
    /// Half edge of the square landing deck around the pad center, m.
    pub deck_half_size: f64,
}

impl Default for PadConfig {
    fn default() -> Self {
        Self { scale: 1.0, layout: None, deck_half_size: 0.5 }
    }
}

impl PadConfig {
    pub fn resolved_layout(&self) -> PadLayout {
        match &self.layout {
            Some(l) => l.clone(),
            None => PadLayout::default().scaled(self.scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    /// Corner pixel noise standard deviation, px.
    pub pixel_noise: f64,
    /// Frame period, s; rounded to a whole number of physics steps.
    pub period: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { intrinsics: CameraIntrinsics::default(), mount: CameraMount::default(), pixel_noise: 0.5, period: 0.04 }
    }
}

/// Everything needed to reproduce one simulated flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Physics step, s.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Simulated time limit, s.
    pub duration: f64,
    /// Initial vehicle position, resting on the ground.
    pub start: Vec3,
    #[serde(default)]
    pub start_yaw: f64,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub estimator_noise: NoiseConfig,
    /// Constant external force (wind), N.
    #[serde(default)]
    pub disturbance_force: Vec3,
    pub world: WorldConfig,
    pub platform: PlatformPath,
    #[serde(default)]
    pub pad: PadConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub mission: MissionConfig,
    #[serde(default)]
    pub tracker: TrackerGains,
    /// Time at which the external land command is issued, s.
    #[serde(default)]
    pub land_command_at: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_dt() -> f64 {
    0.005
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::ConfigInvalid { field: field.to_string(), reason: reason.into() }
}

/// Maps a nested validator message `"name must ..."` to a dotted field path.
fn nested(prefix: &str, msg: String) -> SimError {
    let (field, reason) = match msg.split_once(' ') {
        Some((f, r))
            if !f.trim_end_matches(':').is_empty()
                && f.trim_end_matches(':').chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') =>
        {
            (format!("{prefix}.{}", f.trim_end_matches(':')), r.to_string())
        }
        _ => (prefix.to_string(), msg),
    };
    SimError::ConfigInvalid { field, reason }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| SimError::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be finite and > 0"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be finite and > 0"));
        }
        if !self.start.iter().all(|x| x.is_finite()) {
            return Err(invalid("start", "must be finite"));
        }
        if !self.disturbance_force.iter().all(|x| x.is_finite()) {
            return Err(invalid("disturbance_force", "must be finite"));
        }
        self.vehicle.validate().map_err(|e| invalid("vehicle", e.to_string()))?;
        self.gains.validate().map_err(|e| nested("gains", e))?;
        self.estimator_noise.validate().map_err(|e| nested("estimator_noise", e))?;

        let w = &self.world;
        for i in 0..3 {
            if !(w.bounds.min[i] < w.bounds.max[i]) {
                return Err(invalid("world.bounds", "min must be below max on every axis"));
            }
        }
        if !(w.resolution > 0.0 && w.resolution.is_finite()) {
            return Err(invalid("world.resolution", "must be finite and > 0"));
        }
        if !(w.inflation >= 0.0 && w.inflation.is_finite()) {
            return Err(invalid("world.inflation", "must be finite and >= 0"));
        }
        for (i, o) in w.obstacles.iter().enumerate() {
            if !o.is_valid() {
                return Err(invalid(&format!("world.obstacles[{i}]"), "min must be below max and finite"));
            }
        }

        for (i, s) in self.platform.segments.iter().enumerate() {
            if !(s.duration >= 0.0 && s.duration.is_finite()) || !s.velocity.iter().all(|v| v.is_finite()) {
                return Err(invalid(&format!("platform.segments[{i}]"), "duration must be >= 0 and velocity finite"));
            }
        }
        if !self.platform.start.iter().all(|x| x.is_finite()) {
            return Err(invalid("platform.start", "must be finite"));
        }

        if !(self.pad.scale > 0.0 && self.pad.scale.is_finite()) {
            return Err(invalid("pad.scale", "must be finite and > 0"));
        }
        if !(self.pad.deck_half_size > 0.0) {
            return Err(invalid("pad.deck_half_size", "must be > 0"));
        }
        self.pad.resolved_layout().validate().map_err(|e| invalid("pad.layout", e))?;

        self.camera.intrinsics.validate().map_err(|e| invalid("camera.intrinsics", e))?;
        if !(self.camera.pixel_noise >= 0.0 && self.camera.pixel_noise.is_finite()) {
            return Err(invalid("camera.pixel_noise", "must be finite and >= 0"));
        }
        if !(self.camera.period >= self.dt) {
            return Err(invalid("camera.period", "must be at least one physics step"));
        }

        self.planner.validate().map_err(|e| nested("planner", e))?;
        self.mission.validate().map_err(|e| nested("mission", e))?;
        let tr = &self.tracker;
        if !(tr.alpha > 0.0 && tr.alpha <= 1.0) || !(tr.beta >= 0.0 && tr.beta < 2.0) || !(tr.reset_after > 0.0) {
            return Err(invalid("tracker", "need 0 < alpha <= 1, 0 <= beta < 2, reset_after > 0"));
        }
        if let Some(t) = self.land_command_at {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid("land_command_at", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// One-shot planning problem: a world, boundary states and planner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanScene {
    pub world: WorldConfig,
    pub start: BoundaryState,
    pub goal: Vec3,
    #[serde(default)]
    pub goal_velocity: Vec3,
    /// Initial trajectory duration, s.
    pub horizon: f64,
    #[serde(default)]
    pub planner: PlannerConfig,
}

impl PlanScene {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scene: PlanScene = serde_json::from_str(text).map_err(|e| SimError::ConfigParse(e.to_string()))?;
        scene.planner.validate().map_err(|e| nested("planner", e))?;
        Ok(scene)
    }
}

/// Builds the scene's grid and runs the planner once.
pub fn plan_scene(scene: &PlanScene) -> Result<PlanResult, SimError> {
    let w = &scene.world;
    let grid = grid_from_obstacles(&w.obstacles, &w.bounds, w.resolution, w.inflation)
        .map_err(|e| SimError::ConfigInvalid { field: "world".into(), reason: e.to_string() })?;
    let request = PlanRequest {
        start: scene.start,
        goal: scene.goal,
        goal_velocity: scene.goal_velocity,
        horizon: scene.horizon,
        grid: &grid,
        config: &scene.planner,
    };
    Ok(plan(&request)?)
}

/// Scenario files shipped with the crate.
pub const PRESETS: [(&str, &str); 6] = [
    ("sim", include_str!("../../presets/sim.json")),
    ("indoor-static", include_str!("../../presets/indoor-static.json")),
    ("indoor-moving", include_str!("../../presets/indoor-moving.json")),
    ("outdoor-1", include_str!("../../presets/outdoor-1.json")),
    ("outdoor-2", include_str!("../../presets/outdoor-2.json")),
    ("obstacle-demo", include_str!("../../presets/obstacle-demo.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig, SimError> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| SimError::UnknownPreset(name.to_string()))?;
    ScenarioConfig::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_parse_and_validate() {
        for name in preset_names() {
            let cfg = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
            // round trip through JSON
            assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = preset("sim").unwrap();
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(SimError::ConfigInvalid { field, .. }) if field == "dt"));
        let mut cfg = preset("sim").unwrap();
        cfg.mission.land_height = 5.0;
        assert!(matches!(cfg.validate(), Err(SimError::ConfigInvalid { field, .. }) if field == "mission.land_height"));
        let mut cfg = preset("sim").unwrap();
        cfg.planner.weights.v_max = -1.0;
        assert!(matches!(cfg.validate(), Err(SimError::ConfigInvalid { field, .. }) if field == "planner.weights.v_max"));
        let mut cfg = preset("obstacle-demo").unwrap();
        cfg.world.obstacles[0].max.x = cfg.world.obstacles[0].min.x - 1.0;
        assert!(matches!(cfg.validate(), Err(SimError::ConfigInvalid { field, .. }) if field == "world.obstacles[0]"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = preset("sim").unwrap().to_json().replacen("\"seed\"", "\"sede\"", 1);
        assert!(matches!(ScenarioConfig::from_json(&text), Err(SimError::ConfigParse(_))));
        assert!(matches!(preset("nope"), Err(SimError::UnknownPreset(_))));
    }
}
