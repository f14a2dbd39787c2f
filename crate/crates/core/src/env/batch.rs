//! Vectorized stepping over many independent environments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Action, EnvConfig, EnvState, Observation, StepResult};
use crate::mathcore::PhysicsFault;

/// Outputs of one batched step, indexed like the environments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchStep {
    /// Observation to act on next (after automatic reset of finished envs).
    pub obs: Vec<Observation>,
    /// Observation reached by the step itself, before any reset.
    pub final_obs: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub faults: Vec<Option<PhysicsFault>>,
    pub sq_errors: Vec<f64>,
    pub episode_returns: Vec<Option<f64>>,
}

impl BatchStep {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        BatchStep {
            obs: Vec::with_capacity(n),
            final_obs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            terminated: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            faults: Vec::with_capacity(n),
            sq_errors: Vec::with_capacity(n),
            episode_returns: Vec::with_capacity(n),
        }
    }
}

/// Serializable contents of a [`BatchEnv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSnapshot {
    pub states: Vec<EnvState>,
    pub obs: Vec<Observation>,
}

pub struct BatchEnv {
    cfg: EnvConfig,
    states: Vec<EnvState>,
    obs: Vec<Observation>,
    pool: Option<rayon::ThreadPool>,
}

fn build_pool(workers: usize) -> Option<rayon::ThreadPool> {
    (workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to start worker threads")
    })
}

fn step_one(cfg: &EnvConfig, st: &mut EnvState, action: &Action) -> (StepResult, Observation) {
    let r = st.step(cfg, action, None);
    let next = if r.done() {
        let (fresh, obs) = EnvState::reset(cfg, st.env_index, st.episode + 1);
        *st = fresh;
        obs
    } else {
        r.obs
    };
    (r, next)
}

impl BatchEnv {
    /// Resets `n` environments with indices `0..n`.
    pub fn new(cfg: EnvConfig, n: usize, workers: usize) -> Self {
        let (states, obs) = (0..n as u64).map(|i| EnvState::reset(&cfg, i, 0)).unzip();
        BatchEnv { cfg, states, obs, pool: build_pool(workers) }
    }

    pub fn from_snapshot(cfg: EnvConfig, snap: BatchSnapshot, workers: usize) -> Self {
        BatchEnv { cfg, states: snap.states, obs: snap.obs, pool: build_pool(workers) }
    }

    pub fn snapshot(&self) -> BatchSnapshot {
        BatchSnapshot { states: self.states.clone(), obs: self.obs.clone() }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }

    /// Steps every environment with its action; finished environments are
    /// reset into their next episode. Each environment is touched by exactly
    /// one worker and results are gathered by index, so the output does not
    /// depend on the worker count.
    pub fn step(&mut self, actions: &[Action]) -> BatchStep {
        assert_eq!(actions.len(), self.states.len(), "one action per environment");
        let cfg = &self.cfg;
        let results: Vec<(StepResult, Observation)> = match &self.pool {
            Some(pool) => pool.install(|| {
                self.states
                    .par_iter_mut()
                    .zip(actions.par_iter())
                    .map(|(st, a)| step_one(cfg, st, a))
                    .collect()
            }),
            None => self.states.iter_mut().zip(actions).map(|(st, a)| step_one(cfg, st, a)).collect(),
        };
        let mut out = BatchStep::with_capacity(results.len());
        for (i, (r, next)) in results.into_iter().enumerate() {
            self.obs[i] = next;
            out.obs.push(next);
            out.final_obs.push(r.obs);
            out.rewards.push(r.reward);
            out.terminated.push(r.terminated);
            out.truncated.push(r.truncated);
            out.faults.push(r.fault);
            out.sq_errors.push(r.sq_error);
            out.episode_returns.push(r.episode_return);
        }
        out
    }
}
