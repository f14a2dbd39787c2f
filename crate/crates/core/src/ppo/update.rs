//! Clipped-surrogate PPO update with Adam and global-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{normalize, RolloutBuffer};
use super::policy::{PolicyGrad, PolicyParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub num_envs: usize,
    /// Policy steps per environment per iteration.
    pub rollout_steps: usize,
    /// Total policy steps across all environments.
    pub total_steps: u64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 4,
            minibatches: 4,
            lr: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            num_envs: 64,
            rollout_steps: 32,
            total_steps: 1_000_000,
            hidden: vec![64, 64],
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn steps_per_iteration(&self) -> u64 {
        (self.num_envs * self.rollout_steps) as u64
    }

    pub fn iterations(&self) -> u64 {
        self.total_steps / self.steps_per_iteration().max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err("gamma and lambda must lie in [0, 1]".into());
        }
        if !(self.clip_ratio > 0.0) {
            return Err("clip_ratio must be > 0".into());
        }
        if self.epochs == 0 || self.minibatches == 0 || self.num_envs == 0 || self.rollout_steps == 0 {
            return Err("epochs, minibatches, num_envs and rollout_steps must be > 0".into());
        }
        if self.minibatches > self.num_envs * self.rollout_steps {
            return Err("more minibatches than samples per iteration".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("lr must be > 0".into());
        }
        if !(self.max_grad_norm > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err("max_grad_norm must be > 0 and coefficients >= 0".into());
        }
        if self.hidden.contains(&0) {
            return Err("hidden layer sizes must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grad: &PolicyGrad, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad.iter()).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Set when a non-finite loss or gradient stopped the update.
    pub aborted: bool,
}

/// Loss terms and gradient over a set of sample indices.
pub struct MinibatchLoss {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad: PolicyGrad,
}

/// `L = −E[min(ρA, clip(ρ, 1±ε)A)] + c_v·E[(V − R)²] − c_e·H` and its
/// gradient.
pub fn minibatch_loss(params: &PolicyParams, buf: &RolloutBuffer, idx: &[usize], cfg: &PpoConfig) -> MinibatchLoss {
    let b = idx.len() as f64;
    let mut grad = PolicyGrad::zeros_like(params);
    let (mut pl, mut vl, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    let eps = cfg.clip_ratio;
    let obs: Vec<_> = idx.iter().map(|&i| buf.obs[i]).collect();
    let actions: Vec<_> = idx.iter().map(|&i| buf.actions[i]).collect();
    let ev = params.evaluate_batch(&obs);
    let logps = params.log_prob_batch(&ev, &actions);
    let mut dlogp = vec![0.0; idx.len()];
    let mut dvalue = vec![0.0; idx.len()];
    for (k, &i) in idx.iter().enumerate() {
        let log_ratio = logps[k] - buf.log_probs[i];
        let ratio = log_ratio.exp();
        let a = buf.advantages[i];
        let unclipped = ratio * a;
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let surr = unclipped.min(clipped_ratio * a);
        pl -= surr / b;
        // The min picks the clipped branch only when it is strictly smaller,
        // which happens outside the trust region where its slope is zero.
        let active = unclipped <= clipped_ratio * a;
        if !active {
            clipped += 1.0;
        }
        dlogp[k] = if active { -a * ratio / b } else { 0.0 };
        let verr = ev.values[k] - buf.returns[i];
        vl += verr * verr / b;
        dvalue[k] = cfg.value_coef * 2.0 * verr / b;
        kl += ((ratio - 1.0) - log_ratio) / b;
    }
    params.accumulate_batch(&ev, &actions, &dlogp, &dvalue, &mut grad);
    let entropy = params.entropy();
    for g in &mut grad.log_std {
        *g -= cfg.entropy_coef;
    }
    MinibatchLoss {
        total: pl + cfg.value_coef * vl - cfg.entropy_coef * entropy,
        policy_loss: pl,
        value_loss: vl,
        entropy,
        approx_kl: kl,
        clip_fraction: clipped / b,
        grad,
    }
}

/// Runs `epochs × minibatches` gradient steps over the buffer. Advantages
/// are normalized once over the whole buffer; minibatch order comes from
/// `shuffle_seed` only.
pub fn ppo_update(
    params: &mut PolicyParams,
    opt: &mut Adam,
    buf: &mut RolloutBuffer,
    cfg: &PpoConfig,
    shuffle_seed: u64,
) -> UpdateStats {
    normalize(&mut buf.advantages);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let n = buf.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mb = n / cfg.minibatches;
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for k in 0..cfg.minibatches {
            let end = if k + 1 == cfg.minibatches { n } else { (k + 1) * mb };
            let idx = &order[k * mb..end];
            let mut loss = minibatch_loss(params, buf, idx, cfg);
            let norm = loss.grad.norm();
            if !loss.total.is_finite() || !norm.is_finite() {
                stats.aborted = true;
                log::warn!("non-finite loss or gradient; update aborted");
                return stats;
            }
            if norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / norm;
                for g in loss.grad.iter_mut() {
                    *g *= s;
                }
            }
            opt.step(params, &loss.grad, cfg.lr);
            params.clamp_log_std();
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.approx_kl += loss.approx_kl;
            stats.clip_fraction += loss.clip_fraction;
            count += 1.0;
        }
    }
    stats.policy_loss /= count;
    stats.value_loss /= count;
    stats.entropy /= count;
    stats.approx_kl /= count;
    stats.clip_fraction /= count;
    stats
}
