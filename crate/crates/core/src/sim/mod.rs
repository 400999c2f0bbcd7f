//! Scenario configuration, the fixed-step simulation loop, flight metrics and
//! the files written after a run.

mod config;
mod metrics;
mod output;
mod run;

pub use config::{plan_scene, preset, preset_names, CameraConfig, PadConfig, PlanScene, ScenarioConfig, WorldConfig, PRESETS};
pub use metrics::{compute_metrics, MetricSample, MetricsContext, SummaryMetrics};
pub use output::{emit_outputs, parse_ticks_csv, read_summary, TickRow, SUMMARY_FILE, TICKS_FILE, TICKS_HEADER, TRAJECTORY_FILE};
pub use run::{build_grid, run_scenario, RunResult, TickLog};

use crate::planner::PlannerError;
use crate::vehicle::VehicleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot parse scenario: {0}")]
    ConfigParse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("simulation diverged at t = {t} s")]
    SimulationDiverged { t: f64 },
    #[error("log is empty")]
    EmptyLog,
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("malformed tick file: {0}")]
    Csv(String),
    #[error("malformed summary file: {0}")]
    SummaryParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
