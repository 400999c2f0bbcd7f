//! Quadrotor rigid-body model, cascaded flight controller and the noisy
//! state source used in place of an onboard estimator.

mod control;
mod dynamics;
mod estimate;

pub use control::{controller_update, ControllerGains, ControllerState, Setpoint};
pub use dynamics::{dynamics_derivative, integrate_step, StateDerivative};
pub use estimate::{estimate_state, NoiseConfig, StateEstimate};

use crate::geometry::{EulerAngles, GeometryError, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid vehicle parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
}

/// Physical constants of the airframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the body inertia tensor, kg m^2.
    pub inertia: Vec3,
    /// Rotor inertia `J_r`, kg m^2.
    pub rotor_inertia: f64,
    /// Net residual rotor speed `Omega` driving the gyroscopic cross terms, rad/s.
    pub residual_rotor_speed: f64,
    /// Linear per-axis velocity damping, 1/s.
    pub drag: Vec3,
    pub gravity: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// Absolute torque limit per body axis, N m.
    pub torque_max: Vec3,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.5,
            inertia: Vec3::new(0.029, 0.029, 0.055),
            rotor_inertia: 6e-5,
            residual_rotor_speed: 0.0,
            drag: Vec3::new(0.1, 0.1, 0.1),
            gravity: 9.81,
            thrust_min: 0.0,
            thrust_max: 30.0,
            torque_max: Vec3::new(1.0, 1.0, 0.3),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let bad = |field, reason: &str| Err(VehicleError::InvalidParam { field, reason: reason.into() });
        if !(self.mass > 0.0) {
            return bad("mass", "must be > 0");
        }
        if self.inertia.iter().any(|&i| !(i > 0.0)) {
            return bad("inertia", "all entries must be > 0");
        }
        if self.drag.iter().any(|&d| !(d >= 0.0)) {
            return bad("drag", "coefficients must be >= 0");
        }
        if !(self.thrust_min >= 0.0) || !(self.thrust_max > self.thrust_min) {
            return bad("thrust_max", "need 0 <= thrust_min < thrust_max");
        }
        if self.torque_max.iter().any(|&t| !(t > 0.0)) {
            return bad("torque_max", "limits must be > 0");
        }
        if !(self.gravity >= 0.0) || !self.rotor_inertia.is_finite() || !self.residual_rotor_speed.is_finite() {
            return bad("gravity", "gravity must be >= 0 and rotor terms finite");
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: EulerAngles,
    /// Body-frame angular velocity.
    pub body_rates: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3) -> Self {
        Self { position, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.as_vec().iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
    }
}

/// Collective thrust along body `+z` and body torques.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    pub thrust: f64,
    pub torque: Vec3,
}

impl ControlCommand {
    pub fn clamped(&self, params: &VehicleParams) -> Self {
        Self {
            thrust: self.thrust.clamp(params.thrust_min, params.thrust_max),
            torque: self.torque.zip_map(&params.torque_max, |t, l| t.clamp(-l, l)),
        }
    }
}
