//! Collect → GAE → update loop with learning-curve logging and resumable
//! JSON checkpoints.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::buffer::RolloutBuffer;
use super::policy::PolicyParams;
use super::update::{ppo_update, Adam, PpoConfig};
use crate::env::{Action, BatchEnv, BatchSnapshot, EnvConfig, ACT_DIM};

pub const CHECKPOINT_VERSION: u32 = 1;
/// Completed episodes averaged into `mean_reward`.
pub const REWARD_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error("invalid environment config: {0}")]
    Env(#[from] crate::env::ConfigError),
    #[error("policy parameters became non-finite at iteration {0}")]
    NonFinite(u64),
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint does not match the run: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One learning-curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    /// Policy steps collected so far, all environments.
    pub steps: u64,
    /// Mean return of the last [`REWARD_WINDOW`] completed episodes; `None`
    /// until the first episode finishes.
    pub mean_reward: Option<f64>,
    /// Mean squared wrapped attitude error over this iteration's rollout.
    pub mse_probe: f64,
    pub mean_step_reward: f64,
    pub episodes: u64,
    pub faults: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub aborted: bool,
}

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub params: PolicyParams,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    pub steps: u64,
    pub recent_returns: VecDeque<f64>,
    pub episodes: u64,
    pub batch: BatchSnapshot,
    pub curve: Vec<CurvePoint>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            serde_json::to_writer(&mut f, self)?;
            f.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let found = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(TrainError::Version { found });
        }
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct Trainer {
    pub ppo: PpoConfig,
    seed: u64,
    env: BatchEnv,
    params: PolicyParams,
    adam: Adam,
    rng: ChaCha8Rng,
    iteration: u64,
    steps: u64,
    recent_returns: VecDeque<f64>,
    episodes: u64,
    curve: Vec<CurvePoint>,
}

impl Trainer {
    /// The environment seed is replaced by `seed` so that one number fixes
    /// the whole run.
    pub fn new(ppo: PpoConfig, mut env: EnvConfig, seed: u64, workers: usize) -> Result<Self, TrainError> {
        ppo.validate().map_err(TrainError::Config)?;
        env.randomization.seed = seed;
        env.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = PolicyParams::init(&ppo.hidden, ppo.init_log_std, &mut rng)
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let adam = Adam::new(params.num_params());
        let batch = BatchEnv::new(env, ppo.num_envs, workers);
        Ok(Trainer {
            ppo,
            seed,
            env: batch,
            params,
            adam,
            rng,
            iteration: 0,
            steps: 0,
            recent_returns: VecDeque::with_capacity(REWARD_WINDOW),
            episodes: 0,
            curve: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, workers: usize) -> Result<Self, TrainError> {
        if ck.batch.states.len() != ck.ppo.num_envs {
            return Err(TrainError::Mismatch(format!(
                "{} environment states for num_envs = {}",
                ck.batch.states.len(),
                ck.ppo.num_envs
            )));
        }
        ck.params.check_architecture(&ck.ppo.hidden).map_err(TrainError::Mismatch)?;
        if !ck.params.is_finite() {
            return Err(TrainError::Mismatch("policy parameters are not finite".into()));
        }
        Ok(Trainer {
            env: BatchEnv::from_snapshot(ck.env, ck.batch, workers),
            ppo: ck.ppo,
            seed: ck.seed,
            params: ck.params,
            adam: ck.adam,
            rng: ck.rng,
            iteration: ck.iteration,
            steps: ck.steps,
            recent_returns: ck.recent_returns,
            episodes: ck.episodes,
            curve: ck.curve,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            ppo: self.ppo.clone(),
            env: self.env.config().clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            rng: self.rng.clone(),
            iteration: self.iteration,
            steps: self.steps,
            recent_returns: self.recent_returns.clone(),
            episodes: self.episodes,
            batch: self.env.snapshot(),
            curve: self.curve.clone(),
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.ppo.iterations()
    }

    /// One rollout plus one update.
    pub fn iterate(&mut self) -> Result<&CurvePoint, TrainError> {
        let n = self.ppo.num_envs;
        let horizon = self.ppo.rollout_steps;
        let mut buf = RolloutBuffer::new(n, horizon);
        let (mut sq_sum, mut reward_sum, mut faults) = (0.0, 0.0, 0u64);
        let mut actions: Vec<Action> = vec![[0.0; ACT_DIM]; n];
        for _ in 0..horizon {
            let obs = self.env.observations().to_vec();
            let samples = self.params.sample_batch(&obs, &mut self.rng);
            for (i, (a, logp, v)) in samples.into_iter().enumerate() {
                actions[i] = a;
                buf.obs.push(obs[i]);
                buf.actions.push(a);
                buf.log_probs.push(logp);
                buf.values.push(v);
            }
            let out = self.env.step(&actions);
            let truncated_obs: Vec<_> = (0..n).filter(|&i| out.truncated[i]).map(|i| out.final_obs[i]).collect();
            let mut truncated_values = self.params.value_batch(&truncated_obs).into_iter();
            for i in 0..n {
                buf.rewards.push(out.rewards[i]);
                let done = out.terminated[i] || out.truncated[i];
                buf.dones.push(done);
                buf.truncation_values.push(if out.truncated[i] { truncated_values.next().expect("one per truncation") } else { 0.0 });
                sq_sum += out.sq_errors[i];
                reward_sum += out.rewards[i];
                if let Some(f) = &out.faults[i] {
                    faults += 1;
                    log::warn!("env {i} faulted at iteration {}: {f}", self.iteration);
                }
                if let Some(ret) = out.episode_returns[i] {
                    if self.recent_returns.len() == REWARD_WINDOW {
                        self.recent_returns.pop_front();
                    }
                    self.recent_returns.push_back(ret);
                    self.episodes += 1;
                }
            }
        }
        let bootstrap = self.params.value_batch(self.env.observations());
        buf.finish(&bootstrap, self.ppo.gamma, self.ppo.lambda);
        let shuffle_seed = self.rng.gen::<u64>();
        let stats = ppo_update(&mut self.params, &mut self.adam, &mut buf, &self.ppo, shuffle_seed);
        if !self.params.is_finite() {
            return Err(TrainError::NonFinite(self.iteration));
        }
        self.iteration += 1;
        self.steps += (n * horizon) as u64;
        let samples = (n * horizon) as f64;
        let mean_reward = (!self.recent_returns.is_empty())
            .then(|| self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64);
        self.curve.push(CurvePoint {
            iteration: self.iteration,
            steps: self.steps,
            mean_reward,
            mse_probe: sq_sum / samples,
            mean_step_reward: reward_sum / samples,
            episodes: self.episodes,
            faults,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            aborted: stats.aborted,
        });
        let p = self.curve.last().expect("just pushed");
        log::debug!(
            "iter {} steps {} reward {:?} mse {:.4} kl {:.4}",
            p.iteration,
            p.steps,
            p.mean_reward,
            p.mse_probe,
            p.approx_kl
        );
        Ok(p)
    }

    /// Iterates until `total_steps` is reached, calling `on_iter` after each
    /// iteration (for periodic checkpoints).
    pub fn run<F>(&mut self, mut on_iter: F) -> Result<(), TrainError>
    where
        F: FnMut(&Trainer) -> Result<(), TrainError>,
    {
        while !self.is_done() {
            self.iterate()?;
            on_iter(self)?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome { params: self.params, curve: self.curve }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
}

/// Trains a policy on `env` for `ppo.total_steps` policy steps.
pub fn train(ppo: &PpoConfig, env: &EnvConfig, seed: u64, workers: usize) -> Result<TrainOutcome, TrainError> {
    let mut t = Trainer::new(ppo.clone(), env.clone(), seed, workers)?;
    t.run(|_| Ok(()))?;
    Ok(t.into_outcome())
}

/// `iteration,steps,meanReward,mseProbe` plus diagnostics; an undefined
/// mean reward is written as an empty field.
pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iteration",
        "steps",
        "meanReward",
        "mseProbe",
        "meanStepReward",
        "episodes",
        "faults",
        "policyLoss",
        "valueLoss",
        "approxKL",
        "clipFraction",
    ])?;
    for p in curve {
        out.write_record([
            p.iteration.to_string(),
            p.steps.to_string(),
            p.mean_reward.map(|r| r.to_string()).unwrap_or_default(),
            p.mse_probe.to_string(),
            p.mean_step_reward.to_string(),
            p.episodes.to_string(),
            p.faults.to_string(),
            p.policy_loss.to_string(),
            p.value_loss.to_string(),
            p.approx_kl.to_string(),
            p.clip_fraction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Mean of `mean_reward` over the first and last `k` iterations that have
/// one.
pub fn reward_progress(curve: &[CurvePoint], k: usize) -> Option<(f64, f64)> {
    let r: Vec<f64> = curve.iter().filter_map(|p| p.mean_reward).collect();
    if r.len() < k || k == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&r[..k]), mean(&r[r.len() - k..])))
}
