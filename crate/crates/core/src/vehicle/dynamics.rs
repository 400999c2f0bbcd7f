use super::{ControlCommand, RigidBodyState, VehicleError, VehicleParams};
use crate::geometry::{euler_rates_from_body_rates, rotation_from_euler, EulerAngles, Vec3};

/// Time derivative of a [`RigidBodyState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Euler-angle rates (roll, pitch, yaw).
    pub attitude: Vec3,
    pub body_rates: Vec3,
}

impl StateDerivative {
    pub fn max_abs(&self) -> f64 {
        [self.position, self.velocity, self.attitude, self.body_rates]
            .iter()
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }
}

/// Newton-Euler model.
///
/// Translational: `v_dot = (T/m) R e_z - g e_z - diag(d) v`. Gravity and drag
/// act directly on the acceleration; only the thrust term is divided by mass.
///
/// Rotational, per axis:
/// `I_xx w_x_dot = (I_yy - I_zz) w_y w_z + tau_x + J_r Omega w_y`,
/// `I_yy w_y_dot = (I_zz - I_xx) w_x w_z + tau_y - J_r Omega w_x`,
/// `I_zz w_z_dot = (I_xx - I_yy) w_x w_y + tau_z`.
pub fn dynamics_derivative(
    state: &RigidBodyState,
    cmd: &ControlCommand,
    params: &VehicleParams,
) -> Result<StateDerivative, VehicleError> {
    let r = rotation_from_euler(&state.attitude);
    let thrust_dir = r.matrix().column(2).into_owned();
    let v = state.velocity;
    let velocity_dot = thrust_dir * (cmd.thrust / params.mass)
        - Vec3::new(0.0, 0.0, params.gravity)
        - params.drag.component_mul(&v);

    let i = params.inertia;
    let w = state.body_rates;
    let gyro = params.rotor_inertia * params.residual_rotor_speed;
    let body_rates_dot = Vec3::new(
        ((i.y - i.z) * w.y * w.z + cmd.torque.x + gyro * w.y) / i.x,
        ((i.z - i.x) * w.x * w.z + cmd.torque.y - gyro * w.x) / i.y,
        ((i.x - i.y) * w.x * w.y + cmd.torque.z) / i.z,
    );

    Ok(StateDerivative {
        position: v,
        velocity: velocity_dot,
        attitude: euler_rates_from_body_rates(&state.attitude, &w)?,
        body_rates: body_rates_dot,
    })
}

fn offset(state: &RigidBodyState, k: &StateDerivative, h: f64) -> RigidBodyState {
    RigidBodyState {
        position: state.position + k.position * h,
        velocity: state.velocity + k.velocity * h,
        attitude: EulerAngles::from_vec(&(state.attitude.as_vec() + k.attitude * h)),
        body_rates: state.body_rates + k.body_rates * h,
    }
}

/// One classical fourth-order Runge-Kutta step with the command held constant.
pub fn integrate_step(
    state: &RigidBodyState,
    cmd: &ControlCommand,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::InvalidTimeStep(dt));
    }
    let k1 = dynamics_derivative(state, cmd, params)?;
    let k2 = dynamics_derivative(&offset(state, &k1, 0.5 * dt), cmd, params)?;
    let k3 = dynamics_derivative(&offset(state, &k2, 0.5 * dt), cmd, params)?;
    let k4 = dynamics_derivative(&offset(state, &k3, dt), cmd, params)?;
    let combine = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + (b + c) * 2.0 + d) * (dt / 6.0);
    let sum = StateDerivative {
        position: combine(k1.position, k2.position, k3.position, k4.position),
        velocity: combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity),
        attitude: combine(k1.attitude, k2.attitude, k3.attitude, k4.attitude),
        body_rates: combine(k1.body_rates, k2.body_rates, k3.body_rates, k4.body_rates),
    };
    Ok(offset(state, &sum, 1.0))
}
