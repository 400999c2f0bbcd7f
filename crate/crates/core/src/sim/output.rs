use super::metrics::{MetricSample, SummaryMetrics};
use super::run::TickLog;
use super::SimError;
use crate::geometry::Vec3;
use crate::mission::MissionPhase;
use std::fs;
use std::path::{Path, PathBuf};

pub const TICKS_FILE: &str = "ticks.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_FILE: &str = "trajectory_xyz.csv";

pub const TICKS_HEADER: [&str; 17] = [
    "t",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "roll",
    "pitch",
    "yaw",
    "phase",
    "pad_x",
    "pad_y",
    "pad_z",
    "detected_ids",
    "est_rms_px",
    "plan_ms",
];

fn csv_err(e: csv::Error) -> SimError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::Io(io),
        other => SimError::Csv(format!("{other:?}")),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `ticks.csv`, `summary.json` and `trajectory_xyz.csv` into `dir`,
/// creating it if needed. Floats use the shortest representation that
/// parses back to the same value. Returns the written paths.
pub fn emit_outputs(metrics: &SummaryMetrics, logs: &[TickLog], dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    if logs.is_empty() {
        return Err(SimError::EmptyLog);
    }
    fs::create_dir_all(dir)?;

    let ticks_path = dir.join(TICKS_FILE);
    let mut w = csv::Writer::from_path(&ticks_path).map_err(csv_err)?;
    w.write_record(TICKS_HEADER).map_err(csv_err)?;
    for l in logs {
        let s = &l.truth;
        let ids: Vec<String> = l.detected_ids.iter().map(u32::to_string).collect();
        let row = [
            l.t.to_string(),
            s.position.x.to_string(),
            s.position.y.to_string(),
            s.position.z.to_string(),
            s.velocity.x.to_string(),
            s.velocity.y.to_string(),
            s.velocity.z.to_string(),
            s.attitude.roll.to_string(),
            s.attitude.pitch.to_string(),
            s.attitude.yaw.to_string(),
            l.phase.as_str().to_string(),
            l.pad.center.x.to_string(),
            l.pad.center.y.to_string(),
            l.pad.center.z.to_string(),
            ids.join(";"),
            opt(l.est_rms_px),
            opt(l.plan_ms),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let traj_path = dir.join(TRAJECTORY_FILE);
    let mut w = csv::Writer::from_path(&traj_path).map_err(csv_err)?;
    w.write_record(["t", "uav_x", "uav_y", "uav_z", "pad_x", "pad_y", "pad_z"]).map_err(csv_err)?;
    for l in logs {
        let (p, c) = (l.truth.position, l.pad.center);
        w.write_record([l.t, p.x, p.y, p.z, c.x, c.y, c.z].map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;

    let summary_path = dir.join(SUMMARY_FILE);
    let mut json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    json.push('\n');
    fs::write(&summary_path, json)?;
    Ok(vec![ticks_path, summary_path, traj_path])
}

/// One parsed row of `ticks.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRow {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// roll, pitch, yaw
    pub attitude: Vec3,
    pub phase: MissionPhase,
    pub pad: Vec3,
    pub detected_ids: Vec<u32>,
    pub est_rms_px: Option<f64>,
    pub plan_ms: Option<f64>,
}

impl TickRow {
    pub fn sample(&self) -> MetricSample {
        MetricSample {
            t: self.t,
            position: self.position,
            velocity: self.velocity,
            phase: self.phase,
            pad: self.pad,
            plan_ms: self.plan_ms,
        }
    }
}

pub fn parse_ticks_csv(path: &Path) -> Result<Vec<TickRow>, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TICKS_HEADER.iter().copied()) {
        return Err(SimError::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |col: usize| SimError::Csv(format!("row {}: bad `{}` value {:?}", line + 1, TICKS_HEADER[col], &rec[col]));
        let num = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let opt_num = |col: usize| if rec[col].is_empty() { Ok(None) } else { num(col).map(Some) };
        let ids = if rec[14].is_empty() {
            Vec::new()
        } else {
            rec[14].split(';').map(|s| s.parse::<u32>().map_err(|_| bad(14))).collect::<Result<_, _>>()?
        };
        rows.push(TickRow {
            t: num(0)?,
            position: Vec3::new(num(1)?, num(2)?, num(3)?),
            velocity: Vec3::new(num(4)?, num(5)?, num(6)?),
            attitude: Vec3::new(num(7)?, num(8)?, num(9)?),
            phase: MissionPhase::parse(&rec[10]).ok_or_else(|| bad(10))?,
            pad: Vec3::new(num(11)?, num(12)?, num(13)?),
            detected_ids: ids,
            est_rms_px: opt_num(15)?,
            plan_ms: opt_num(16)?,
        });
    }
    Ok(rows)
}

pub fn read_summary(path: &Path) -> Result<SummaryMetrics, SimError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SimError::SummaryParse(e.to_string()))
}
