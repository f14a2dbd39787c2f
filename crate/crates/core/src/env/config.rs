//! Episode, domain-randomization and reward configuration blocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{AttitudeController, ControllerKind};
use crate::eval::task::TaskSpec;
use crate::hydro::{ParamError, VehicleParams, NOMINAL_COB_OFFSET, NOMINAL_VOLUME};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Vehicle(#[from] ParamError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrLevel {
    Ndr,
    Sdr,
    Ldr,
}

impl DrLevel {
    pub const ALL: [DrLevel; 3] = [DrLevel::Ndr, DrLevel::Sdr, DrLevel::Ldr];

    pub fn name(self) -> &'static str {
        match self {
            DrLevel::Ndr => "ndr",
            DrLevel::Sdr => "sdr",
            DrLevel::Ldr => "ldr",
        }
    }
}

impl std::str::FromStr for DrLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DrLevel::ALL
            .into_iter()
            .find(|l| l.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown randomization level '{s}' (expected ndr, sdr or ldr)"))
    }
}

/// Full-range randomization table.
pub const LDR_COB_OFFSET: (f64, f64) = (0.075, 0.15);
pub const LDR_VOLUME_LITRES: (f64, f64) = (1.5, 3.0);
pub const LDR_GAIN_PERTURB: (f64, f64) = (0.15, 0.30);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRandomizationConfig {
    pub level: DrLevel,
    /// COB offset magnitude range (m); direction is uniform on the sphere.
    pub cob_offset_range: (f64, f64),
    /// Displaced volume range (L).
    pub volume_range: (f64, f64),
    /// Relative gain perturbation magnitude range; the sign is a fair coin.
    pub gain_perturb_range: (f64, f64),
    pub seed: u64,
}

impl DomainRandomizationConfig {
    /// Standard ranges for a level. SDR uses ranges half as wide as LDR,
    /// centered on the nominal vehicle.
    pub fn for_level(level: DrLevel, seed: u64) -> Self {
        let half = |range: (f64, f64), center: f64| {
            let w = (range.1 - range.0) / 4.0;
            ((center - w).max(0.0), center + w)
        };
        let (cob, vol, gain) = match level {
            DrLevel::Ndr => {
                let c = NOMINAL_COB_OFFSET.norm();
                let v = NOMINAL_VOLUME * 1e3;
                ((c, c), (v, v), (0.0, 0.0))
            }
            DrLevel::Sdr => (
                half(LDR_COB_OFFSET, NOMINAL_COB_OFFSET.norm()),
                half(LDR_VOLUME_LITRES, NOMINAL_VOLUME * 1e3),
                half(LDR_GAIN_PERTURB, 0.0),
            ),
            DrLevel::Ldr => (LDR_COB_OFFSET, LDR_VOLUME_LITRES, LDR_GAIN_PERTURB),
        };
        DomainRandomizationConfig { level, cob_offset_range: cob, volume_range: vol, gain_perturb_range: gain, seed }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 >= 0.0 && r.0 <= r.1;
        if !ordered(self.cob_offset_range) {
            return Err(invalid("cob_offset_range", "expected 0 <= low <= high"));
        }
        if !ordered(self.volume_range) || self.volume_range.0 <= 0.0 {
            return Err(invalid("volume_range", "expected 0 < low <= high"));
        }
        if !ordered(self.gain_perturb_range) || self.gain_perturb_range.1 >= 1.0 {
            return Err(invalid("gain_perturb_range", "expected 0 <= low <= high < 1"));
        }
        Ok(())
    }
}

impl Default for DomainRandomizationConfig {
    fn default() -> Self {
        Self::for_level(DrLevel::Ndr, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Disturbance {
    None,
    /// Ornstein–Uhlenbeck wrench noise with stationary standard deviations
    /// `sigma_force` (N) and `sigma_torque` (N·m).
    Turbulence { sigma_force: f64, sigma_torque: f64, correlation_time: f64 },
    /// Body wrench `[fx, fy, fz, tx, ty, tz]` held for `duration` seconds
    /// starting at each time in `times` (s, episode time).
    Transient { times: Vec<f64>, wrench: [f64; 6], duration: f64 },
}

impl Disturbance {
    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Disturbance::None => Ok(()),
            Disturbance::Turbulence { sigma_force, sigma_torque, correlation_time } => {
                if !(*sigma_force >= 0.0 && *sigma_torque >= 0.0) {
                    return Err(invalid("disturbance", "turbulence sigmas must be >= 0"));
                }
                if !(*correlation_time > 0.0 && correlation_time.is_finite()) {
                    return Err(invalid("disturbance", "correlation_time must be > 0"));
                }
                Ok(())
            }
            Disturbance::Transient { times, wrench, duration } => {
                if times.iter().any(|t| !t.is_finite()) || wrench.iter().any(|w| !w.is_finite()) {
                    return Err(invalid("disturbance", "transient times and wrench must be finite"));
                }
                if !(*duration > 0.0) {
                    return Err(invalid("disturbance", "transient duration must be > 0"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Control steps per episode.
    pub horizon: usize,
    /// s
    pub control_dt: f64,
    pub physics_substeps: usize,
    /// Control steps per policy action.
    pub policy_decimation: usize,
    /// Episode terminates when the attitude error angle exceeds this (rad).
    pub termination_angle: f64,
    /// Initial roll/pitch/yaw offsets are drawn uniformly from ±this (rad).
    pub initial_attitude_range: f64,
    /// Start each episode at a random phase of the task reference.
    pub random_phase: bool,
    pub disturbance: Disturbance,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 500,
            control_dt: 0.01,
            physics_substeps: 1,
            policy_decimation: 2,
            termination_angle: std::f64::consts::FRAC_PI_2,
            initial_attitude_range: 0.3,
            random_phase: true,
            disturbance: Disturbance::None,
        }
    }
}

impl EpisodeConfig {
    pub fn physics_dt(&self) -> f64 {
        self.control_dt / self.physics_substeps as f64
    }

    /// Policy steps per episode, rounding a partial last step up.
    pub fn policy_horizon(&self) -> usize {
        self.horizon.div_ceil(self.policy_decimation)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be > 0"));
        }
        if self.physics_substeps == 0 {
            return Err(invalid("physics_substeps", "must be > 0"));
        }
        if self.policy_decimation == 0 {
            return Err(invalid("policy_decimation", "must be > 0"));
        }
        let dt = self.physics_dt();
        if !(self.control_dt.is_finite() && dt > 0.0 && dt <= 0.1) {
            return Err(invalid("control_dt", "physics step control_dt / physics_substeps must lie in (0, 0.1]"));
        }
        if !(self.termination_angle > 0.0) {
            return Err(invalid("termination_angle", "must be > 0"));
        }
        if !(self.initial_attitude_range >= 0.0 && self.initial_attitude_range.is_finite()) {
            return Err(invalid("initial_attitude_range", "must be finite and >= 0"));
        }
        self.disturbance.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub wq: f64,
    pub wp: f64,
    pub wz: f64,
    /// Exponent on the action L1 norm.
    pub b: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { wq: 1.0, wp: 0.1, wz: 0.5, b: 1.0 }
    }
}

impl RewardConfig {
    pub fn max_reward(&self) -> f64 {
        self.wq + self.wp + self.wz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, w) in [("wq", self.wq), ("wp", self.wp), ("wz", self.wz)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("reward", format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid("reward", "b must be finite and > 0"));
        }
        Ok(())
    }
}

pub const DEFAULT_ACTION_SCALE: [f64; 4] = [0.5, 0.5, 0.5, 0.5];

/// Everything needed to build and step one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub vehicle: VehicleParams,
    pub controller: AttitudeController,
    pub episode: EpisodeConfig,
    pub randomization: DomainRandomizationConfig,
    pub reward: RewardConfig,
    /// Roll, pitch, yaw (rad) and depth (m) per unit action.
    pub action_scale: [f64; 4],
    pub task: TaskSpec,
}

impl EnvConfig {
    pub fn new(kind: ControllerKind, task: TaskSpec) -> Self {
        EnvConfig {
            vehicle: VehicleParams::nominal(),
            controller: AttitudeController::new(kind),
            episode: EpisodeConfig::default(),
            randomization: DomainRandomizationConfig::default(),
            reward: RewardConfig::default(),
            action_scale: DEFAULT_ACTION_SCALE,
            task,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vehicle.validate()?;
        self.episode.validate()?;
        self.randomization.validate()?;
        self.reward.validate()?;
        if self.action_scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("action_scale", "entries must be finite and >= 0"));
        }
        if !(self.task.duration > 0.0) {
            return Err(invalid("task.duration", "must be > 0"));
        }
        Ok(())
    }
}
