//! Fixed-horizon rollout storage and generalized advantage estimation.

use crate::env::{Action, Observation};

/// Time-major `[horizon][num_envs]` rollout data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs: Vec<Observation>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Episode ended after this step (terminated or truncated).
    pub dones: Vec<bool>,
    /// `V(final observation)` for truncated steps, 0 otherwise.
    pub truncation_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize) -> Self {
        let n = num_envs * horizon;
        RolloutBuffer {
            num_envs,
            horizon,
            obs: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            truncation_values: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.num_envs * self.horizon
    }

    /// Fills `advantages` and `returns` from the stored transitions.
    pub fn finish(&mut self, bootstrap: &[f64], gamma: f64, lambda: f64) {
        assert!(self.is_full(), "rollout buffer is not full");
        let (adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.dones,
            &self.truncation_values,
            bootstrap,
            self.num_envs,
            gamma,
            lambda,
        );
        self.advantages = adv;
        self.returns = ret;
    }
}

/// Reverse-recursive GAE over time-major arrays. A done step does not
/// propagate the next step's advantage; truncated steps bootstrap from
/// `truncation_values`, terminated ones (stored as 0) do not.
#[allow(clippy::too_many_arguments)]
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    truncation_values: &[f64],
    bootstrap: &[f64],
    num_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(n % num_envs, 0);
    assert_eq!(bootstrap.len(), num_envs);
    let horizon = n / num_envs;
    let mut adv = vec![0.0; n];
    for e in 0..num_envs {
        let mut next_adv = 0.0;
        let mut next_value = bootstrap[e];
        for t in (0..horizon).rev() {
            let i = t * num_envs + e;
            let delta = if dones[i] {
                rewards[i] + gamma * truncation_values[i] - values[i]
            } else {
                rewards[i] + gamma * next_value - values[i]
            };
            let a = if dones[i] { delta } else { delta + gamma * lambda * next_adv };
            adv[i] = a;
            next_adv = a;
            next_value = values[i];
        }
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    for v in x {
        *v = (*v - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_zero_is_one_step() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.1, -1.0];
        let (a, ret) = compute_gae(&r, &v, &[false; 3], &[0.0; 3], &[7.0], 1, 0.0, 0.9);
        assert_eq!(a, vec![0.5, 1.9, 4.0]);
        assert_eq!(ret, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn lambda_zero_is_td0() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.1, -1.0];
        let g = 0.9;
        let (a, _) = compute_gae(&r, &v, &[false; 3], &[0.0; 3], &[2.0], 1, g, 0.0);
        let expected = [1.0 + g * 0.1 - 0.5, 2.0 - g - 0.1, 3.0 + g * 2.0 + 1.0];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn done_cuts_and_truncation_bootstraps() {
        // Two envs, two steps, time-major.
        let r = [1.0, 1.0, 1.0, 1.0];
        let v = [0.0; 4];
        let dones = [true, false, false, true];
        let tv = [0.0, 0.0, 0.0, 5.0];
        let (a, _) = compute_gae(&r, &v, &dones, &tv, &[10.0, 10.0], 2, 0.5, 1.0);
        // env 0: terminated at t=0 → 1; t=1 bootstraps 10 → 6.
        assert_eq!(a[0], 1.0);
        assert_eq!(a[2], 6.0);
        // env 1: t=1 truncated with V=5 → 3.5; t=0 → 1 + 0.5·3.5.
        assert_eq!(a[3], 3.5);
        assert_eq!(a[1], 1.0 + 0.5 * 3.5);
    }

    proptest! {
        #[test]
        fn matches_direct_summation(r in prop::array::uniform3(-2.0f64..2.0), v in prop::array::uniform3(-2.0f64..2.0),
                                    boot in -2.0f64..2.0, g in 0.0f64..1.0, l in 0.0f64..1.0) {
            let (a, _) = compute_gae(&r, &v, &[false; 3], &[0.0; 3], &[boot], 1, g, l);
            let next = [v[1], v[2], boot];
            let delta: Vec<f64> = (0..3).map(|t| r[t] + g * next[t] - v[t]).collect();
            for t in 0..3 {
                let direct: f64 = (t..3).map(|k| (g * l).powi((k - t) as i32) * delta[k]).sum();
                prop_assert!((a[t] - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn normalization_moments(mut x in prop::collection::vec(-100.0f64..100.0, 2..200)) {
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            normalize(&mut x);
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
        }
    }
}
