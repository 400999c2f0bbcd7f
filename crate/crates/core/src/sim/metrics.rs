use super::SimError;
use crate::geometry::Vec3;
use crate::mission::MissionPhase;
use serde::{Deserialize, Serialize};

const MS_TO_KMH: f64 = 3.6;

/// The per-tick quantities the flight metrics are computed from. Both the
/// in-memory log and a parsed `ticks.csv` reduce to this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub phase: MissionPhase,
    pub pad: Vec3,
    /// Present on ticks where the planner ran.
    pub plan_ms: Option<f64>,
}

/// Landing acceptance thresholds used to judge the contact tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsContext {
    pub touchdown_tolerance: f64,
    pub max_touchdown_speed: f64,
}

/// Key flight data of one run. Speeds are in km/h, everything else SI
/// except planning time (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    /// Path length flown from the first tick to touchdown, m.
    pub flight_distance: f64,
    /// Mean platform speed over the same window.
    pub target_speed: f64,
    pub uav_max_speed: f64,
    /// Time-averaged over the whole window, hover and waiting included.
    pub uav_average_speed: f64,
    /// Mean wall-clock time per planner invocation, ms.
    pub mean_planning_time: f64,
    pub plan_count: usize,
    /// Planner invocations after the first.
    pub replanning_count: usize,
    /// s
    pub flight_time: f64,
    pub landed: bool,
    pub landing_success: bool,
    /// Horizontal UAV-to-pad distance at contact, or on the last tick when
    /// the vehicle never landed, m.
    pub final_offset: f64,
    /// Downward speed at contact, m/s; zero without a contact.
    pub touchdown_speed: f64,
}

/// Flight metrics over a tick log.
///
/// The window runs from the first tick to the contact tick (the last `Land`
/// tick right before `Landed`), or to the end of the log without a landing.
pub fn compute_metrics(samples: &[MetricSample], ctx: &MetricsContext) -> Result<SummaryMetrics, SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let contact = samples
        .windows(2)
        .position(|w| w[0].phase == MissionPhase::Land && w[1].phase == MissionPhase::Landed);
    let end = contact.unwrap_or(samples.len() - 1);
    let window = &samples[..=end];

    let flight_distance: f64 = window.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum();
    let pad_distance: f64 = window.windows(2).map(|w| (w[1].pad - w[0].pad).norm()).sum();
    let flight_time = window[end].t - window[0].t;
    let speeds = window.iter().map(|s| s.velocity.norm());
    let uav_max_speed = speeds.clone().fold(0.0, f64::max) * MS_TO_KMH;
    let uav_average_speed = speeds.sum::<f64>() / window.len() as f64 * MS_TO_KMH;
    let target_speed = if flight_time > 0.0 { pad_distance / flight_time * MS_TO_KMH } else { 0.0 };

    let plans: Vec<f64> = samples.iter().filter_map(|s| s.plan_ms).collect();
    let mean_planning_time = if plans.is_empty() { 0.0 } else { plans.iter().sum::<f64>() / plans.len() as f64 };

    let last = &window[end];
    let final_offset = (last.position.xy() - last.pad.xy()).norm();
    let (landed, touchdown_speed) = match contact {
        Some(_) => (true, (-last.velocity.z).max(0.0)),
        None => (false, 0.0),
    };
    Ok(SummaryMetrics {
        flight_distance,
        target_speed,
        uav_max_speed,
        uav_average_speed,
        mean_planning_time,
        plan_count: plans.len(),
        replanning_count: plans.len().saturating_sub(1),
        flight_time,
        landed,
        landing_success: landed && final_offset <= ctx.touchdown_tolerance && touchdown_speed <= ctx.max_touchdown_speed,
        final_offset,
        touchdown_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CTX: MetricsContext = MetricsContext { touchdown_tolerance: 0.3, max_touchdown_speed: 0.5 };

    fn sample(t: f64, x: f64, vx: f64) -> MetricSample {
        MetricSample {
            t,
            position: Vec3::new(x, 0.0, 1.0),
            velocity: Vec3::new(vx, 0.0, 0.0),
            phase: MissionPhase::Hover,
            pad: Vec3::zeros(),
            plan_ms: None,
        }
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(compute_metrics(&[], &CTX), Err(SimError::EmptyLog)));
    }

    #[test]
    fn stationary_log_has_zero_distance_and_speed() {
        let log: Vec<_> = (0..50).map(|k| sample(k as f64 * 0.1, 2.0, 0.0)).collect();
        let m = compute_metrics(&log, &CTX).unwrap();
        assert_eq!(m.flight_distance, 0.0);
        assert_eq!(m.uav_max_speed, 0.0);
        assert_eq!(m.uav_average_speed, 0.0);
        assert_eq!(m.target_speed, 0.0);
        assert!(!m.landed);
    }

    #[test]
    fn straight_flight_at_one_meter_per_second() {
        let log: Vec<_> = (0..=100).map(|k| sample(k as f64 * 0.1, k as f64 * 0.1, 1.0)).collect();
        let m = compute_metrics(&log, &CTX).unwrap();
        assert!((m.flight_distance - 10.0).abs() < 1e-9);
        assert!((m.uav_max_speed - 3.6).abs() < 1e-12);
        assert!((m.uav_average_speed - 3.6).abs() < 1e-12);
        assert!((m.flight_time - 10.0).abs() < 1e-12);
    }

    #[test]
    fn three_plans_mean_two_replans() {
        let mut log: Vec<_> = (0..10).map(|k| sample(k as f64, 0.0, 0.0)).collect();
        log[1].plan_ms = Some(1.0);
        log[4].plan_ms = Some(2.0);
        log[7].plan_ms = Some(6.0);
        let m = compute_metrics(&log, &CTX).unwrap();
        assert_eq!(m.plan_count, 3);
        assert_eq!(m.replanning_count, 2);
        assert!((m.mean_planning_time - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contact_tick_closes_the_window() {
        let mut log: Vec<_> = (0..6).map(|k| sample(k as f64, 0.08 * k as f64, 0.0)).collect();
        for s in &mut log[..4] {
            s.phase = MissionPhase::Land;
        }
        log[3].velocity.z = -0.3;
        for s in &mut log[4..] {
            s.phase = MissionPhase::Landed;
            s.position.x = 7.0;
        }
        let m = compute_metrics(&log, &CTX).unwrap();
        assert!(m.landed && m.landing_success);
        assert!((m.final_offset - 0.24).abs() < 1e-12);
        assert!((m.touchdown_speed - 0.3).abs() < 1e-12);
        assert!((m.flight_time - 3.0).abs() < 1e-12);
        assert!((m.flight_distance - 0.24).abs() < 1e-12);
    }
}
