//! Evaluation runs: controller comparison and zero-shot buoyancy shifts.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::task::TaskSpec;
use crate::env::{Action, DomainRandomizationConfig, DrLevel, EnvConfig, EnvState, Observation, TraceRow};
use crate::hydro::VehicleParams;

/// Anything that maps an observation to a deterministic action.
pub trait ActionPolicy: Sync {
    fn act(&self, obs: &Observation) -> Action;
}

/// Zero action: the controller tracks the raw reference.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullPolicy;

impl ActionPolicy for NullPolicy {
    fn act(&self, _obs: &Observation) -> Action {
        [0.0; 4]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub rows: Vec<TraceRow>,
    pub report: MetricsReport,
    pub fault: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Aggregate over all samples of all episodes.
    pub report: MetricsReport,
    pub episodes: Vec<EpisodeOutcome>,
}

/// Evaluation environment: fixed vehicle, level start at `t = 0`, full task
/// duration, no early termination.
pub fn evaluation_config(base: &EnvConfig, task: &TaskSpec, params: &VehicleParams) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.vehicle = params.clone();
    cfg.task = task.clone();
    cfg.randomization = DomainRandomizationConfig::for_level(DrLevel::Ndr, base.randomization.seed);
    cfg.episode.horizon = (task.duration / cfg.episode.control_dt).round().max(1.0) as usize;
    cfg.episode.initial_attitude_range = 0.0;
    cfg.episode.random_phase = false;
    cfg.episode.termination_angle = f64::INFINITY;
    cfg
}

fn run_episode(cfg: &EnvConfig, policy: &dyn ActionPolicy, episode: u64) -> EpisodeOutcome {
    let (mut st, mut obs) = EnvState::reset(cfg, 0, episode);
    let mut rows = Vec::with_capacity(cfg.episode.horizon);
    let mut fault = None;
    loop {
        let a = policy.act(&obs);
        let r = st.step(cfg, &a, Some(&mut rows));
        obs = r.obs;
        if let Some(f) = &r.fault {
            fault = Some(f.to_string());
        }
        if r.done() {
            break;
        }
    }
    let report = MetricsReport::from_rows(&rows);
    EpisodeOutcome { rows, report, fault }
}

/// Runs `episodes` deterministic episodes (policy mean actions) on the given
/// vehicle. Episodes differ only through the disturbance realization.
pub fn evaluate_policy(
    policy: &dyn ActionPolicy,
    base: &EnvConfig,
    task: &TaskSpec,
    params: &VehicleParams,
    episodes: usize,
) -> Evaluation {
    let cfg = evaluation_config(base, task, params);
    let outcomes: Vec<EpisodeOutcome> =
        (0..episodes as u64).into_par_iter().map(|e| run_episode(&cfg, policy, e)).collect();
    let report = MetricsReport::from_rows(&outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect::<Vec<_>>());
    Evaluation { report, episodes: outcomes }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuoyancyCondition {
    InDomain,
    Positive,
    Negative,
}

impl BuoyancyCondition {
    pub const ALL: [BuoyancyCondition; 3] =
        [BuoyancyCondition::InDomain, BuoyancyCondition::Positive, BuoyancyCondition::Negative];

    pub fn name(self) -> &'static str {
        match self {
            BuoyancyCondition::InDomain => "in-domain",
            BuoyancyCondition::Positive => "pos-buoy",
            BuoyancyCondition::Negative => "neg-buoy",
        }
    }

    /// Vehicle density relative to the fluid.
    pub fn density_ratio(self) -> Option<f64> {
        match self {
            BuoyancyCondition::InDomain => None,
            BuoyancyCondition::Positive => Some(0.95),
            BuoyancyCondition::Negative => Some(1.05),
        }
    }

    /// Rescales the volume at fixed mass so that `m / V = ratio · ρ`.
    pub fn apply(self, nominal: &VehicleParams) -> VehicleParams {
        let mut p = nominal.clone();
        if let Some(ratio) = self.density_ratio() {
            p.volume = p.mass / (ratio * p.fluid_density);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationEntry {
    pub level: DrLevel,
    pub task: String,
    pub condition: BuoyancyCondition,
    pub mse: f64,
}

/// MSE of each policy on the nominal vehicle and under the two buoyancy
/// shifts, for each task.
pub fn dr_generalization_protocol(
    policies: &[(DrLevel, &dyn ActionPolicy)],
    base: &EnvConfig,
    tasks: &[TaskSpec],
    episodes: usize,
) -> Vec<GeneralizationEntry> {
    let mut out = Vec::new();
    for task in tasks {
        for &(level, policy) in policies {
            for cond in BuoyancyCondition::ALL {
                let params = cond.apply(&base.vehicle);
                let ev = evaluate_policy(policy, base, task, &params, episodes);
                out.push(GeneralizationEntry {
                    level,
                    task: task.kind.name().to_string(),
                    condition: cond,
                    mse: ev.report.mse_total,
                });
            }
        }
    }
    out
}

/// Out-of-domain over in-domain MSE for one policy, task and shift.
pub fn degradation_ratio(table: &[GeneralizationEntry], level: DrLevel, task: &str, cond: BuoyancyCondition) -> Option<f64> {
    let find = |c| table.iter().find(|e| e.level == level && e.task == task && e.condition == c).map(|e| e.mse);
    Some(find(cond)? / find(BuoyancyCondition::InDomain)?)
}

/// One row per task and level, columns in `BuoyancyCondition::ALL` order.
pub fn write_generalization_csv<W: Write>(w: W, table: &[GeneralizationEntry]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["task", "level", "in-domain", "pos-buoy", "neg-buoy"])?;
    let mut keys: Vec<(String, DrLevel)> = Vec::new();
    for e in table {
        if !keys.iter().any(|(t, l)| *t == e.task && *l == e.level) {
            keys.push((e.task.clone(), e.level));
        }
    }
    for (task, level) in keys {
        let mut rec = vec![task.clone(), level.name().to_string()];
        for c in BuoyancyCondition::ALL {
            let v = table.iter().find(|e| e.task == task && e.level == level && e.condition == c);
            rec.push(v.map(|e| e.mse.to_string()).unwrap_or_default());
        }
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}
