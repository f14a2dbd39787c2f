//! Gaussian actor-critic: tanh-squashed mean, state-independent log-std.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{BatchCache, Mlp, MlpCache, ShapeError};
use crate::env::{Action, Observation, ACT_DIM, OBS_DIM};
use crate::eval::ActionPolicy;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrad {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        PolicyGrad {
            actor: vec![0.0; p.actor.num_params()],
            critic: vec![0.0; p.critic.num_params()],
            log_std: vec![0.0; p.log_std.len()],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.actor.iter().chain(&self.critic).chain(&self.log_std)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.actor.iter_mut().chain(self.critic.iter_mut()).chain(self.log_std.iter_mut())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Cached quantities of one actor/critic evaluation.
pub struct Evaluated {
    pub mean: Vec<f64>,
    pub value: f64,
    actor_cache: MlpCache,
    critic_cache: MlpCache,
}

/// Batched evaluation; column `j` belongs to sample `j`.
pub struct BatchEvaluated {
    pub means: DMatrix<f64>,
    pub values: Vec<f64>,
    actor_cache: BatchCache,
    critic_cache: BatchCache,
}

impl PolicyParams {
    /// Orthogonal-style scaled init: hidden gain √2, small actor output so
    /// the initial mean is near zero, unit critic output.
    pub fn init<R: Rng>(hidden: &[usize], init_log_std: f64, rng: &mut R) -> Result<Self, ShapeError> {
        let mut a = vec![OBS_DIM];
        a.extend_from_slice(hidden);
        a.push(ACT_DIM);
        let mut c = vec![OBS_DIM];
        c.extend_from_slice(hidden);
        c.push(1);
        let gain = std::f64::consts::SQRT_2;
        Ok(PolicyParams {
            actor: Mlp::init(&a, gain, 0.01, rng)?,
            critic: Mlp::init(&c, gain, 1.0, rng)?,
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); ACT_DIM],
        })
    }

    /// Checks the networks against the layout `init(hidden, ..)` produces.
    pub fn check_architecture(&self, hidden: &[usize]) -> Result<(), String> {
        let layout = |out: usize| {
            let mut v = vec![OBS_DIM];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        if self.actor.sizes() != layout(ACT_DIM).as_slice() {
            return Err(format!("actor layers {:?}, expected {:?}", self.actor.sizes(), layout(ACT_DIM)));
        }
        if self.critic.sizes() != layout(1).as_slice() {
            return Err(format!("critic layers {:?}, expected {:?}", self.critic.sizes(), layout(1)));
        }
        if self.log_std.len() != ACT_DIM {
            return Err(format!("{} log-std entries, expected {ACT_DIM}", self.log_std.len()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.critic.num_params() + self.log_std.len()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.actor.params_mut().iter_mut().chain(self.critic.params_mut().iter_mut()).chain(self.log_std.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.actor.params().iter().chain(self.critic.params()).chain(&self.log_std).all(|v| v.is_finite())
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn evaluate(&self, obs: &[f64]) -> Result<Evaluated, ShapeError> {
        let actor_cache = self.actor.forward_cached(obs)?;
        let critic_cache = self.critic.forward_cached(obs)?;
        let mean = actor_cache.output().iter().map(|z| z.tanh()).collect();
        let value = critic_cache.output()[0];
        Ok(Evaluated { mean, value, actor_cache, critic_cache })
    }

    pub fn mean_action(&self, obs: &Observation) -> Action {
        let out = self.actor.forward(obs).expect("observation width matches the actor");
        let mut a = [0.0; ACT_DIM];
        for (ai, z) in a.iter_mut().zip(out) {
            *ai = z.tanh();
        }
        a
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.critic.forward(obs).expect("observation width matches the critic")[0]
    }

    /// Draws an unclamped action; the environment clamps it to `[−1, 1]`.
    pub fn sample<R: Rng>(&self, obs: &Observation, rng: &mut R) -> (Action, f64, f64) {
        let ev = self.evaluate(obs).expect("observation width matches the policy");
        let mut a = [0.0; ACT_DIM];
        for (i, ai) in a.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *ai = ev.mean[i] + self.log_std[i].exp() * eps;
        }
        let logp = self.log_prob(&ev.mean, &a);
        (a, logp, ev.value)
    }

    pub fn log_prob(&self, mean: &[f64], a: &[f64]) -> f64 {
        mean.iter()
            .zip(a)
            .zip(&self.log_std)
            .map(|((m, x), ls)| {
                let z = (x - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LOG_2PI
            })
            .sum()
    }

    /// Differential entropy of the Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_2PI).sum()
    }

    /// Backpropagates `dL/dlogp` and `dL/dV` for one sample into `grad`.
    pub fn accumulate(&self, ev: &Evaluated, action: &[f64], dlogp: f64, dvalue: f64, grad: &mut PolicyGrad) {
        let mut upstream = vec![0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let var = (2.0 * self.log_std[i]).exp();
            let diff = action[i] - ev.mean[i];
            let m = ev.mean[i];
            upstream[i] = dlogp * diff / var * (1.0 - m * m);
            grad.log_std[i] += dlogp * (diff * diff / var - 1.0);
        }
        if dlogp != 0.0 {
            self.actor.backward(&ev.actor_cache, &upstream, &mut grad.actor).expect("shapes fixed at init");
        }
        if dvalue != 0.0 {
            self.critic.backward(&ev.critic_cache, &[dvalue], &mut grad.critic).expect("shapes fixed at init");
        }
    }
}

impl PolicyParams {
    pub fn evaluate_batch(&self, obs: &[Observation]) -> BatchEvaluated {
        let x = DMatrix::from_fn(OBS_DIM, obs.len(), |i, j| obs[j][i]);
        let actor_cache = self.actor.forward_batch(&x).expect("observation width matches the actor");
        let critic_cache = self.critic.forward_batch(&x).expect("observation width matches the critic");
        let means = actor_cache.output().map(|z| z.tanh());
        let values = critic_cache.output().row(0).iter().copied().collect();
        BatchEvaluated { means, values, actor_cache, critic_cache }
    }

    /// [`PolicyParams::sample`] over a batch; noise is drawn in index order.
    pub fn sample_batch<R: Rng>(&self, obs: &[Observation], rng: &mut R) -> Vec<(Action, f64, f64)> {
        let ev = self.evaluate_batch(obs);
        (0..obs.len())
            .map(|j| {
                let mean: Vec<f64> = ev.means.column(j).iter().copied().collect();
                let mut a = [0.0; ACT_DIM];
                for (i, ai) in a.iter_mut().enumerate() {
                    let eps: f64 = rng.sample(StandardNormal);
                    *ai = mean[i] + self.log_std[i].exp() * eps;
                }
                (a, self.log_prob(&mean, &a), ev.values[j])
            })
            .collect()
    }

    pub fn value_batch(&self, obs: &[Observation]) -> Vec<f64> {
        let x = DMatrix::from_fn(OBS_DIM, obs.len(), |i, j| obs[j][i]);
        let out = self.critic.forward_batch(&x).expect("observation width matches the critic");
        out.output().row(0).iter().copied().collect()
    }

    pub fn log_prob_batch(&self, ev: &BatchEvaluated, actions: &[Action]) -> Vec<f64> {
        actions
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let m: Vec<f64> = ev.means.column(j).iter().copied().collect();
                self.log_prob(&m, a)
            })
            .collect()
    }

    /// Batched [`PolicyParams::accumulate`] with per-sample upstream terms.
    pub fn accumulate_batch(&self, ev: &BatchEvaluated, actions: &[Action], dlogp: &[f64], dvalue: &[f64], grad: &mut PolicyGrad) {
        let b = actions.len();
        let mut upstream = DMatrix::zeros(ACT_DIM, b);
        let var: Vec<f64> = self.log_std.iter().map(|l| (2.0 * l).exp()).collect();
        for j in 0..b {
            for i in 0..ACT_DIM {
                let m = ev.means[(i, j)];
                let diff = actions[j][i] - m;
                upstream[(i, j)] = dlogp[j] * diff / var[i] * (1.0 - m * m);
                grad.log_std[i] += dlogp[j] * (diff * diff / var[i] - 1.0);
            }
        }
        self.actor.backward_batch(&ev.actor_cache, upstream, &mut grad.actor).expect("shapes fixed at init");
        let dv = DMatrix::from_row_slice(1, b, dvalue);
        self.critic.backward_batch(&ev.critic_cache, dv, &mut grad.critic).expect("shapes fixed at init");
    }
}

impl ActionPolicy for PolicyParams {
    fn act(&self, obs: &Observation) -> Action {
        self.mean_action(obs)
    }
}
