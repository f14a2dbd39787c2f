//! External wrench disturbances injected at the physics rate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::Disturbance;
use crate::hydro::Wrench;
use crate::mathcore::Vec3;

/// Internal state of the disturbance process for one environment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceState {
    force: Vec3,
    torque: Vec3,
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

impl DisturbanceState {
    /// Draws the initial state; turbulence starts in its stationary law.
    pub fn new(d: &Disturbance, rng: &mut ChaCha8Rng) -> Self {
        match d {
            Disturbance::Turbulence { sigma_force, sigma_torque, .. } => DisturbanceState {
                force: normal3(rng) * *sigma_force,
                torque: normal3(rng) * *sigma_torque,
            },
            _ => DisturbanceState::default(),
        }
    }

    /// Wrench acting over `[t, t + dt)`; advances the process by `dt`.
    pub fn advance(&mut self, d: &Disturbance, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> Wrench {
        match d {
            Disturbance::None => Wrench::ZERO,
            Disturbance::Turbulence { sigma_force, sigma_torque, correlation_time } => {
                let w = Wrench::new(self.force, self.torque);
                // Exact OU transition over one step.
                let decay = (-dt / correlation_time).exp();
                let spread = (1.0 - decay * decay).sqrt();
                self.force = self.force * decay + normal3(rng) * (sigma_force * spread);
                self.torque = self.torque * decay + normal3(rng) * (sigma_torque * spread);
                w
            }
            Disturbance::Transient { times, wrench, duration } => {
                if times.iter().any(|&t0| t >= t0 && t < t0 + duration) {
                    Wrench::from_array(*wrench)
                } else {
                    Wrench::ZERO
                }
            }
        }
    }
}
