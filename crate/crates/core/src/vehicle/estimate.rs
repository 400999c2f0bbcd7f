use super::RigidBodyState;
use crate::geometry::{EulerAngles, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Standard deviations of the additive Gaussian noise applied per channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
    pub body_rate: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.position, self.velocity, self.attitude, self.body_rate];
        if all.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err("noise sigmas must be finite and >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateEstimate {
    pub state: RigidBodyState,
    pub noise: NoiseConfig,
}

fn perturb<R: Rng + ?Sized>(v: Vec3, sigma: f64, rng: &mut R) -> Vec3 {
    if sigma == 0.0 {
        return v;
    }
    let n = Normal::new(0.0, sigma).expect("sigma validated finite and non-negative");
    Vec3::new(v.x + n.sample(rng), v.y + n.sample(rng), v.z + n.sample(rng))
}

/// Ground truth plus independent zero-mean Gaussian noise on every channel.
///
/// Channels with zero sigma consume no random draws, so a noiseless estimate
/// equals the truth bit for bit.
pub fn estimate_state<R: Rng + ?Sized>(truth: &RigidBodyState, noise: &NoiseConfig, rng: &mut R) -> StateEstimate {
    let att = perturb(truth.attitude.as_vec(), noise.attitude, rng);
    let state = RigidBodyState {
        position: perturb(truth.position, noise.position, rng),
        velocity: perturb(truth.velocity, noise.velocity, rng),
        attitude: EulerAngles::from_vec(&att),
        body_rates: perturb(truth.body_rates, noise.body_rate, rng),
    };
    StateEstimate { state, noise: *noise }
}
