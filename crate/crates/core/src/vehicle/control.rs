//! Cascaded flight controller: position P -> velocity PID -> thrust vector ->
//! attitude P -> body-rate PID -> torques.

use super::{ControlCommand, StateEstimate, VehicleParams};
use crate::geometry::{body_rates_from_euler_rates, rotation_from_euler, wrap_angle, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vec3,
    /// Velocity feed-forward added to the position loop output.
    pub velocity: Vec3,
    pub yaw: f64,
}

impl Setpoint {
    pub fn hold(position: Vec3, yaw: f64) -> Self {
        Self { position, velocity: Vec3::zeros(), yaw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub position_p: Vec3,
    pub velocity_p: Vec3,
    pub velocity_i: Vec3,
    pub velocity_d: Vec3,
    /// Clamp on the velocity-loop integral term, m/s^2.
    pub velocity_integral_limit: Vec3,
    pub attitude_p: Vec3,
    pub rate_p: Vec3,
    pub rate_i: Vec3,
    pub rate_d: Vec3,
    /// Clamp on the rate-loop integral term, rad/s^2.
    pub rate_integral_limit: Vec3,
    pub max_horizontal_speed: f64,
    pub max_vertical_speed: f64,
    /// Tilt limit of the commanded thrust vector, rad.
    pub max_tilt: f64,
    pub max_body_rate: Vec3,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            position_p: Vec3::new(1.8, 1.8, 2.0),
            velocity_p: Vec3::new(3.5, 3.5, 4.0),
            velocity_i: Vec3::new(0.8, 0.8, 1.0),
            velocity_d: Vec3::new(0.05, 0.05, 0.0),
            velocity_integral_limit: Vec3::new(2.0, 2.0, 3.0),
            attitude_p: Vec3::new(10.0, 10.0, 4.0),
            rate_p: Vec3::new(30.0, 30.0, 15.0),
            rate_i: Vec3::new(2.0, 2.0, 1.0),
            rate_d: Vec3::new(0.2, 0.2, 0.0),
            rate_integral_limit: Vec3::new(5.0, 5.0, 5.0),
            max_horizontal_speed: 3.0,
            max_vertical_speed: 1.5,
            max_tilt: 0.6,
            max_body_rate: Vec3::new(4.0, 4.0, 2.0),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), String> {
        let vectors = [
            ("position_p", self.position_p),
            ("velocity_p", self.velocity_p),
            ("velocity_i", self.velocity_i),
            ("velocity_d", self.velocity_d),
            ("attitude_p", self.attitude_p),
            ("rate_p", self.rate_p),
            ("rate_i", self.rate_i),
            ("rate_d", self.rate_d),
        ];
        for (name, v) in vectors {
            if v.iter().any(|g| !(*g >= 0.0)) {
                return Err(format!("{name}: gains must be >= 0"));
            }
        }
        for (name, v) in [
            ("velocity_integral_limit", self.velocity_integral_limit),
            ("rate_integral_limit", self.rate_integral_limit),
            ("max_body_rate", self.max_body_rate),
        ] {
            if v.iter().any(|g| !(*g > 0.0)) {
                return Err(format!("{name}: must be > 0"));
            }
        }
        if !(self.max_horizontal_speed > 0.0) || !(self.max_vertical_speed > 0.0) {
            return Err("max_horizontal_speed/max_vertical_speed: must be > 0".into());
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < std::f64::consts::FRAC_PI_2) {
            return Err("max_tilt: must lie in (0, pi/2)".into());
        }
        Ok(())
    }
}

/// Integrator and derivative memory of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    pub velocity_integral: Vec3,
    pub rate_integral: Vec3,
    pub prev_velocity_error: Option<Vec3>,
    pub prev_rate_error: Option<Vec3>,
}

fn clamp_vec(v: Vec3, limit: &Vec3) -> Vec3 {
    v.zip_map(limit, |x, l| x.clamp(-l, l))
}

fn derivative(err: Vec3, prev: Option<Vec3>, dt: f64) -> Vec3 {
    prev.map_or_else(Vec3::zeros, |p| (err - p) / dt)
}

/// One controller tick. Returns the clamped command and the updated state.
///
/// Integrators are clamped to their limits and hold their value on any tick
/// where the loop output saturates.
pub fn controller_update(
    setpoint: &Setpoint,
    est: &StateEstimate,
    gains: &ControllerGains,
    params: &VehicleParams,
    state: &ControllerState,
    dt: f64,
) -> (ControlCommand, ControllerState) {
    let s = &est.state;
    let g = params.gravity;
    let mut next = *state;

    // position P
    let mut v_des = gains.position_p.component_mul(&(setpoint.position - s.position)) + setpoint.velocity;
    let h = v_des.xy().norm();
    if h > gains.max_horizontal_speed {
        let k = gains.max_horizontal_speed / h;
        v_des.x *= k;
        v_des.y *= k;
    }
    v_des.z = v_des.z.clamp(-gains.max_vertical_speed, gains.max_vertical_speed);

    // velocity PID -> desired acceleration
    let v_err = v_des - s.velocity;
    let v_int = clamp_vec(state.velocity_integral + gains.velocity_i.component_mul(&v_err) * dt, &gains.velocity_integral_limit);
    let v_d = gains.velocity_d.component_mul(&derivative(v_err, state.prev_velocity_error, dt));
    let acc = gains.velocity_p.component_mul(&v_err) + v_int + v_d;

    // specific thrust vector with vertical and tilt saturation
    let mut f = acc + Vec3::new(0.0, 0.0, g);
    let mut saturated = false;
    let fz_min = (params.thrust_min / params.mass).max(0.1 * g);
    let fz_max = params.thrust_max / params.mass;
    if f.z < fz_min || f.z > fz_max {
        f.z = f.z.clamp(fz_min, fz_max);
        saturated = true;
    }
    let h_max = f.z * gains.max_tilt.tan();
    let fh = f.xy().norm();
    if fh > h_max {
        let k = h_max / fh;
        f.x *= k;
        f.y *= k;
        saturated = true;
    }
    if !saturated {
        next.velocity_integral = v_int;
    }
    next.prev_velocity_error = Some(v_err);

    // attitude target from the thrust direction and yaw setpoint
    let (sy, cy) = setpoint.yaw.sin_cos();
    let fx = cy * f.x + sy * f.y;
    let fy = -sy * f.x + cy * f.y;
    let roll_des = (-fy).atan2((fx * fx + f.z * f.z).sqrt());
    let pitch_des = fx.atan2(f.z);

    let body_z = rotation_from_euler(&s.attitude).matrix().column(2).into_owned();
    let thrust_raw = params.mass * f.dot(&body_z);

    // attitude P -> body-rate targets
    let att_err = Vec3::new(
        roll_des - s.attitude.roll,
        pitch_des - s.attitude.pitch,
        wrap_angle(setpoint.yaw - s.attitude.yaw),
    );
    let euler_rate_des = gains.attitude_p.component_mul(&att_err);
    let rates_des = clamp_vec(body_rates_from_euler_rates(&s.attitude, &euler_rate_des), &gains.max_body_rate);

    // body-rate PID -> torques
    let w = s.body_rates;
    let r_err = rates_des - w;
    let r_int = clamp_vec(state.rate_integral + gains.rate_i.component_mul(&r_err) * dt, &gains.rate_integral_limit);
    let r_d = gains.rate_d.component_mul(&derivative(r_err, state.prev_rate_error, dt));
    let alpha = gains.rate_p.component_mul(&r_err) + r_int + r_d;
    let inertia = params.inertia;
    let torque_raw = inertia.component_mul(&alpha) + w.cross(&inertia.component_mul(&w));

    let cmd = ControlCommand { thrust: thrust_raw, torque: torque_raw }.clamped(params);
    if cmd.torque == torque_raw {
        next.rate_integral = r_int;
    }
    next.prev_rate_error = Some(r_err);
    (cmd, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EulerAngles, Vec3};
    use crate::vehicle::{dynamics_derivative, integrate_step, NoiseConfig, RigidBodyState};
    use proptest::prelude::*;

    fn perfect(state: RigidBodyState) -> StateEstimate {
        StateEstimate { state, noise: NoiseConfig::default() }
    }

    #[test]
    fn hover_command_at_setpoint() {
        let p = VehicleParams::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 2.0));
        let sp = Setpoint::hold(s.position, 0.0);
        let (cmd, _) = controller_update(&sp, &perfect(s), &ControllerGains::default(), &p, &ControllerState::default(), 0.005);
        assert!((cmd.thrust - p.mass * p.gravity).abs() <= 1e-9);
        assert_eq!(cmd.torque, Vec3::zeros());
    }

    #[test]
    fn forward_error_pitches_toward_positive_x_acceleration() {
        let p = VehicleParams::default();
        let gains = ControllerGains::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 2.0));
        let sp = Setpoint::hold(Vec3::new(1.0, 0.0, 2.0), 0.0);
        let (cmd, _) = controller_update(&sp, &perfect(s), &gains, &p, &ControllerState::default(), 0.005);
        // positive pitch torque builds positive pitch
        assert!(cmd.torque.y > 0.0);
        // and a positive pitch produces +x acceleration under the dynamics model
        let pitched = RigidBodyState { attitude: EulerAngles::new(0.0, 0.1, 0.0), ..s };
        let hover = crate::vehicle::ControlCommand { thrust: p.hover_thrust(), torque: Vec3::zeros() };
        let d = dynamics_derivative(&pitched, &hover, &p).unwrap();
        assert!(d.velocity.x > 0.0);
    }

    #[test]
    fn lateral_error_rolls_toward_positive_y_acceleration() {
        let p = VehicleParams::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 2.0));
        let sp = Setpoint::hold(Vec3::new(0.0, 1.0, 2.0), 0.0);
        let (cmd, _) = controller_update(&sp, &perfect(s), &ControllerGains::default(), &p, &ControllerState::default(), 0.005);
        assert!(cmd.torque.x < 0.0);
        let rolled = RigidBodyState { attitude: EulerAngles::new(-0.1, 0.0, 0.0), ..s };
        let hover = crate::vehicle::ControlCommand { thrust: p.hover_thrust(), torque: Vec3::zeros() };
        assert!(dynamics_derivative(&rolled, &hover, &p).unwrap().velocity.y > 0.0);
    }

    fn simulate_step_response(target: Vec3, seconds: f64) -> Vec<(f64, RigidBodyState)> {
        let p = VehicleParams::default();
        let gains = ControllerGains::default();
        let dt = 0.005;
        let mut s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 1.0));
        let mut cs = ControllerState::default();
        let sp = Setpoint::hold(target, 0.0);
        let mut out = Vec::new();
        let n = (seconds / dt).round() as usize;
        for k in 0..n {
            let (cmd, next) = controller_update(&sp, &perfect(s), &gains, &p, &cs, dt);
            cs = next;
            s = integrate_step(&s, &cmd, &p, dt).unwrap();
            out.push(((k + 1) as f64 * dt, s));
        }
        out
    }

    #[test]
    fn vertical_step_settles_within_four_seconds() {
        let trace = simulate_step_response(Vec3::new(0.0, 0.0, 2.0), 6.0);
        for (t, s) in &trace {
            if *t >= 4.0 {
                assert!((s.position.z - 2.0).abs() <= 0.05, "t={t} z={}", s.position.z);
            }
        }
    }

    #[test]
    fn horizontal_step_settles() {
        let trace = simulate_step_response(Vec3::new(1.0, -1.0, 1.0), 8.0);
        let (_, last) = trace.last().unwrap();
        assert!((last.position - Vec3::new(1.0, -1.0, 1.0)).norm() < 0.05);
        let max_tilt = trace
            .iter()
            .map(|(_, s)| s.attitude.roll.abs().max(s.attitude.pitch.abs()))
            .fold(0.0, f64::max);
        assert!(max_tilt < 0.7);
    }

    proptest! {
        #[test]
        fn output_within_limits_and_integrators_bounded(
            pos in prop::array::uniform3(-50.0..50.0f64),
            vel in prop::array::uniform3(-20.0..20.0f64),
            att in prop::array::uniform3(-1.2..1.2f64),
            rates in prop::array::uniform3(-10.0..10.0f64),
            sp in prop::array::uniform3(-50.0..50.0f64),
            yaw in -4.0..4.0f64,
            steps in 1usize..20,
        ) {
            let p = VehicleParams::default();
            let gains = ControllerGains::default();
            let est = perfect(RigidBodyState {
                position: Vec3::from(pos),
                velocity: Vec3::from(vel),
                attitude: EulerAngles::new(att[0], att[1], att[2]),
                body_rates: Vec3::from(rates),
            });
            let sp = Setpoint::hold(Vec3::from(sp), yaw);
            let mut cs = ControllerState::default();
            for _ in 0..steps {
                let (cmd, next) = controller_update(&sp, &est, &gains, &p, &cs, 0.005);
                prop_assert!(cmd.thrust >= p.thrust_min && cmd.thrust <= p.thrust_max);
                for i in 0..3 {
                    prop_assert!(cmd.torque[i].abs() <= p.torque_max[i]);
                    prop_assert!(next.velocity_integral[i].abs() <= gains.velocity_integral_limit[i]);
                    prop_assert!(next.rate_integral[i].abs() <= gains.rate_integral_limit[i]);
                }
                cs = next;
            }
        }
    }
}
