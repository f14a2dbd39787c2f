//! JSON run configuration shared by every subcommand.
//!
//! Every block has defaults, so `{}` is a valid config. Unknown keys are
//! rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actuation::ThrusterLayout;
use crate::control::ControllerKind;
use crate::env::{DomainRandomizationConfig, DrLevel, EnvConfig, EpisodeConfig, RewardConfig, DEFAULT_ACTION_SCALE};
use crate::eval::{TaskKind, TaskSpec};
use crate::hydro::VehicleParams;
use crate::mathcore::{Mat3, Vec3};
use crate::ppo::PpoConfig;
use crate::tuner::TuningScenario;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

/// Fields left out keep the nominal vehicle's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleOverrides {
    pub mass: Option<f64>,
    pub inertia: Option<Mat3>,
    pub volume: Option<f64>,
    pub cob_offset: Option<Vec3>,
    pub fluid_density: Option<f64>,
    pub viscosity: Option<f64>,
    pub gravity: Option<f64>,
    pub layout: Option<ThrusterLayout>,
}

impl VehicleOverrides {
    pub fn apply(&self, base: &VehicleParams) -> VehicleParams {
        let mut p = base.clone();
        if let Some(v) = self.mass {
            p.mass = v;
        }
        if let Some(v) = self.inertia {
            p.inertia = v;
        }
        if let Some(v) = self.volume {
            p.volume = v;
        }
        if let Some(v) = self.cob_offset {
            p.cob_offset = v;
        }
        if let Some(v) = self.fluid_density {
            p.fluid_density = v;
        }
        if let Some(v) = self.viscosity {
            p.viscosity = v;
        }
        if let Some(v) = self.gravity {
            p.gravity = v;
        }
        if let Some(v) = &self.layout {
            p.layout = v.clone();
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvBlock {
    /// Controller used for training.
    pub controller: ControllerKind,
    pub randomization: DrLevel,
    pub episode: EpisodeConfig,
    pub reward: RewardConfig,
    pub action_scale: [f64; 4],
}

impl Default for EnvBlock {
    fn default() -> Self {
        EnvBlock {
            controller: ControllerKind::ASSurface,
            randomization: DrLevel::Ldr,
            episode: EpisodeConfig::default(),
            reward: RewardConfig::default(),
            action_scale: DEFAULT_ACTION_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    /// Reference followed during training.
    pub train: TaskKind,
    /// Evaluation grid.
    pub eval: Vec<TaskKind>,
    pub controllers: Vec<ControllerKind>,
    /// Evaluation episodes per cell.
    pub episodes: usize,
    /// Overrides every task's duration (s).
    pub duration: Option<f64>,
    /// Also evaluate each checkpoint under the two buoyancy shifts.
    pub buoyancy_shifts: bool,
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            train: TaskKind::Task1,
            eval: vec![TaskKind::Task1, TaskKind::Task2],
            controllers: ControllerKind::ALL.to_vec(),
            episodes: 1,
            duration: None,
            buoyancy_shifts: false,
        }
    }
}

impl TaskBlock {
    pub fn spec(&self, kind: TaskKind) -> TaskSpec {
        let t = TaskSpec::from_kind(kind);
        match self.duration {
            Some(d) => t.with_duration(d),
            None => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerBlock {
    pub scenario: TuningScenario,
    pub rounds: usize,
    /// JSON array of scripted replies for the mock backend.
    pub mock_script: Option<PathBuf>,
}

impl Default for TunerBlock {
    fn default() -> Self {
        TunerBlock { scenario: TuningScenario::default(), rounds: 2, mock_script: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub vehicle: VehicleOverrides,
    pub env: EnvBlock,
    pub ppo: PpoConfig,
    pub task: TaskBlock,
    pub tuner: TunerBlock,
    /// Trained policies for `eval` and `tune`, at most one per controller.
    pub checkpoints: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            vehicle: VehicleOverrides::default(),
            env: EnvBlock::default(),
            ppo: PpoConfig::default(),
            task: TaskBlock::default(),
            tuner: TunerBlock::default(),
            checkpoints: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|source| LoadError::Parse { path: path.to_path_buf(), source })
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        self.vehicle.apply(&VehicleParams::nominal())
    }

    /// Environment for one controller and task with this config's vehicle,
    /// episode, reward and randomization settings.
    pub fn env_config(&self, kind: ControllerKind, task: TaskSpec) -> EnvConfig {
        let mut cfg = EnvConfig::new(kind, task);
        cfg.vehicle = self.vehicle_params();
        cfg.episode = self.env.episode.clone();
        cfg.reward = self.env.reward.clone();
        cfg.action_scale = self.env.action_scale;
        cfg.randomization = DomainRandomizationConfig::for_level(self.env.randomization, self.seed);
        cfg
    }

    /// All problems found, one line each.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if let Err(e) = self.ppo.validate() {
            errs.push(format!("ppo: {e}"));
        }
        let env = self.env_config(self.env.controller, self.task.spec(self.task.train));
        if let Err(e) = env.validate() {
            errs.push(format!("env: {e}"));
        }
        if let Err(e) = self.tuner.scenario.validate() {
            errs.push(format!("tuner.scenario: {e}"));
        }
        if self.task.eval.is_empty() {
            errs.push("task.eval: at least one task is required".into());
        }
        if self.task.controllers.is_empty() {
            errs.push("task.controllers: at least one controller is required".into());
        }
        if self.task.episodes == 0 {
            errs.push("task.episodes: must be > 0".into());
        }
        if let Some(d) = self.task.duration {
            if !(d > 0.0 && d.is_finite()) {
                errs.push("task.duration: must be > 0".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
