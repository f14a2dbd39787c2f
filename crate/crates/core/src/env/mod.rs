//! The reinforcement-learning environment.
//!
//! A policy observes the current and desired attitude quaternions plus the
//! depth error, and outputs setpoint offsets that are added to the task
//! reference before the low-level controller turns them into a body wrench.
//! Each environment owns its own counter-seeded RNG so results never depend
//! on how environments are scheduled across threads.

pub mod batch;
pub mod config;
pub mod disturbance;
pub mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::UnitSphere;
use serde::{Deserialize, Serialize};

pub use batch::{BatchEnv, BatchSnapshot, BatchStep};
pub use config::{
    ConfigError, Disturbance, DomainRandomizationConfig, DrLevel, EnvConfig, EpisodeConfig, RewardConfig, DEFAULT_ACTION_SCALE,
};
use disturbance::DisturbanceState;
pub use trace::TraceRow;

use crate::control::{AttitudeController, Channel, ChannelController, Setpoints};
use crate::hydro::{hydrodynamic_wrench, restoring_wrench, VehicleParams};
use crate::eval::metrics::{compound_error, euler_errors};
use crate::mathcore::{integrate_step, EulerAngles, PhysicsFault, RigidBodyState, UnitQuat, Vec3};

pub const OBS_DIM: usize = 9;
pub const ACT_DIM: usize = 4;

pub type Observation = [f64; OBS_DIM];
pub type Action = [f64; ACT_DIM];

/// `[q (4), q_des (4), Δz]` with `Δz` the depth setpoint minus the depth.
pub fn observation(q: UnitQuat, q_des: UnitQuat, dz: f64) -> Observation {
    let a = q.to_array();
    let b = q_des.to_array();
    [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3], dz]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub rq: f64,
    pub rp: f64,
    pub rz: f64,
}

/// Weighted sum of the alignment, action and depth terms.
pub fn compute_reward(q: UnitQuat, q_des: UnitQuat, raw: &Action, dz: f64, cfg: &RewardConfig) -> (f64, RewardComponents) {
    let err = q.mul(q_des.conj());
    let rq = (-err.vector_part().norm()).exp();
    let l1: f64 = raw.iter().map(|a| a.abs()).sum();
    let rp = (-l1.powf(cfg.b)).exp();
    let rz = (-dz * dz).exp();
    (cfg.wq * rq + cfg.wp * rp + cfg.wz * rz, RewardComponents { rq, rp, rz })
}

/// Rotation angle between two attitudes (rad, in `[0, π]`).
pub fn attitude_error_angle(q: UnitQuat, q_des: UnitQuat) -> f64 {
    let s = q.mul(q_des.conj()).vector_part().norm().min(1.0);
    2.0 * s.asin()
}

fn perturb(gain: f64, range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    let u = rng.gen_range(range.0..=range.1);
    let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    gain * (1.0 + s * u)
}

fn perturb_channel(c: &mut ChannelController, range: (f64, f64), rng: &mut ChaCha8Rng) {
    c.zeta1 = perturb(c.zeta1, range, rng);
    c.zeta2 = perturb(c.zeta2, range, rng);
    c.alpha = perturb(c.alpha, range, rng);
    c.kp = perturb(c.kp, range, rng);
    c.ki = perturb(c.ki, range, rng);
    c.kd = perturb(c.kd, range, rng);
}

/// Samples vehicle parameters and controller gains for one episode.
pub fn sample_domain(
    base: &VehicleParams,
    controller: &AttitudeController,
    dr: &DomainRandomizationConfig,
    rng: &mut ChaCha8Rng,
) -> (VehicleParams, AttitudeController) {
    let mut params = base.clone();
    let mut ctrl = controller.clone();
    ctrl.reset_state();
    if dr.level == DrLevel::Ndr {
        return (params, ctrl);
    }
    let magnitude = rng.gen_range(dr.cob_offset_range.0..=dr.cob_offset_range.1);
    let dir: [f64; 3] = rng.sample(UnitSphere);
    params.cob_offset = Vec3::from_array(dir) * magnitude;
    params.volume = rng.gen_range(dr.volume_range.0..=dr.volume_range.1) * 1e-3;
    for c in Channel::ALL {
        perturb_channel(ctrl.channel_mut(c), dr.gain_perturb_range, rng);
    }
    (params, ctrl)
}

/// Counter-derived RNG for one `(seed, env, episode)` triple.
pub fn episode_rng(seed: u64, env_index: u64, episode: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&env_index.to_le_bytes());
    key[16..24].copy_from_slice(&episode.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Outcome of one policy step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub components: RewardComponents,
    pub terminated: bool,
    pub truncated: bool,
    pub fault: Option<PhysicsFault>,
    /// Mean over axes of the squared wrapped attitude error at the end of
    /// the step.
    pub sq_error: f64,
    pub compound: f64,
    /// Sum of rewards since reset, set when the episode ends.
    pub episode_return: Option<f64>,
    pub episode_length: usize,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Mutable state of one environment instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub env_index: u64,
    pub episode: u64,
    rng: ChaCha8Rng,
    pub params: VehicleParams,
    pub controller: AttitudeController,
    pub body: RigidBodyState,
    disturbance: DisturbanceState,
    /// Task time at episode start.
    pub phase: f64,
    /// Control steps taken in this episode.
    pub steps: usize,
    pub policy_steps: usize,
    pub episode_return: f64,
    pub done: bool,
}

impl EnvState {
    /// Starts episode `episode` of environment `env_index`.
    pub fn reset(cfg: &EnvConfig, env_index: u64, episode: u64) -> (EnvState, Observation) {
        let mut rng = episode_rng(cfg.randomization.seed, env_index, episode);
        let (params, controller) = sample_domain(&cfg.vehicle, &cfg.controller, &cfg.randomization, &mut rng);
        let phase = if cfg.episode.random_phase { rng.gen_range(0.0..cfg.task.duration) } else { 0.0 };
        let r = cfg.episode.initial_attitude_range;
        let jitter = |rng: &mut ChaCha8Rng| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        let reference = cfg.task.reference_attitude(phase);
        let start = EulerAngles::new(
            reference.roll + jitter(&mut rng),
            reference.pitch + jitter(&mut rng),
            reference.yaw + jitter(&mut rng),
        );
        let body = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, cfg.task.depth), UnitQuat::from_euler(start));
        let disturbance = DisturbanceState::new(&cfg.episode.disturbance, &mut rng);
        let st = EnvState {
            env_index,
            episode,
            rng,
            params,
            controller,
            body,
            disturbance,
            phase,
            steps: 0,
            policy_steps: 0,
            episode_return: 0.0,
            done: false,
        };
        let obs = st.observe(cfg);
        (st, obs)
    }

    /// Episode time (s).
    pub fn time(&self, cfg: &EnvConfig) -> f64 {
        self.steps as f64 * cfg.episode.control_dt
    }

    pub fn desired_attitude(&self, cfg: &EnvConfig) -> UnitQuat {
        UnitQuat::from_euler(cfg.task.reference_attitude(self.phase + self.time(cfg)))
    }

    pub fn depth_error(&self, cfg: &EnvConfig) -> f64 {
        cfg.task.depth - self.body.position.z
    }

    pub fn observe(&self, cfg: &EnvConfig) -> Observation {
        observation(self.body.orientation, self.desired_attitude(cfg), self.depth_error(cfg))
    }

    /// Advances `policy_decimation` control steps under one action.
    pub fn step(&mut self, cfg: &EnvConfig, action: &Action, mut trace: Option<&mut Vec<TraceRow>>) -> StepResult {
        debug_assert!(!self.done, "step called on a finished episode");
        let raw = action.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) });
        let ep = &cfg.episode;
        let dt = ep.control_dt;
        let pdt = ep.physics_dt();
        let eq_box = self.params.equivalent_box();
        let trace_start = trace.as_ref().map(|t| t.len());
        let mut fault = None;

        for _ in 0..ep.policy_decimation {
            if self.steps >= ep.horizon {
                break;
            }
            let t_task = self.phase + self.time(cfg);
            let reference = cfg.task.reference_attitude(t_task);
            let sp = Setpoints {
                attitude: EulerAngles::new(
                    reference.roll + raw[0] * cfg.action_scale[0],
                    reference.pitch + raw[1] * cfg.action_scale[1],
                    reference.yaw + raw[2] * cfg.action_scale[2],
                ),
                depth: cfg.task.depth + raw[3] * cfg.action_scale[3],
            };
            let (out, next) = self.controller.step(&sp, &self.body, dt);
            self.controller = next;
            let layout = &self.params.layout;
            let alloc = layout.allocate(&out.wrench);
            let thrust = alloc.command.thrust();
            let actuator = layout.wrench_from_forces(&thrust);

            let mut body = self.body;
            for k in 0..ep.physics_substeps {
                let t_ep = self.time(cfg) + k as f64 * pdt;
                let dist = self.disturbance.advance(&ep.disturbance, t_ep, pdt, &mut self.rng);
                let total = actuator + hydrodynamic_wrench(&eq_box, &body, &self.params)
                    + restoring_wrench(&body, &self.params)
                    + dist;
                match integrate_step(&body, total.force, total.torque, &self.params, pdt) {
                    Ok(b) => body = b,
                    Err(e) => {
                        fault = Some(e);
                        break;
                    }
                }
            }
            if fault.is_some() {
                break;
            }
            self.body = body;
            self.steps += 1;

            if let Some(rows) = trace.as_deref_mut() {
                let t = self.time(cfg);
                let desired = cfg.task.reference_attitude(self.phase + t).canonical();
                let actual = self.body.orientation.to_euler().angles;
                rows.push(TraceRow {
                    t,
                    roll: actual.roll,
                    pitch: actual.pitch,
                    yaw: actual.yaw,
                    ref_roll: desired.roll,
                    ref_pitch: desired.pitch,
                    ref_yaw: desired.yaw,
                    depth: self.body.position.z,
                    ref_depth: cfg.task.depth,
                    u: out.outputs,
                    delta_u: Channel::ALL.map(|c| self.controller.channel(c).delta_u),
                    wrench: out.wrench.to_array(),
                    commands: *alloc.command.values(),
                    rq: 0.0,
                    rp: 0.0,
                    rz: 0.0,
                    reward: 0.0,
                    compound: compound_error(actual, desired),
                });
            }
        }

        let q_des = self.desired_attitude(cfg);
        let dz = self.depth_error(cfg);
        let (mut reward, components) = compute_reward(self.body.orientation, q_des, &raw, dz, &cfg.reward);
        if fault.is_some() {
            reward = 0.0;
        }
        let actual = self.body.orientation.to_euler().angles;
        let desired = cfg.task.reference_attitude(self.phase + self.time(cfg)).canonical();
        let errs = euler_errors(actual, desired);
        let sq_error = errs.iter().map(|e| e * e).sum::<f64>() / 3.0;
        let compound = errs.iter().map(|e| e.abs()).sum();

        if let (Some(rows), Some(start)) = (trace, trace_start) {
            for row in &mut rows[start..] {
                row.rq = components.rq;
                row.rp = components.rp;
                row.rz = components.rz;
                row.reward = reward;
            }
        }

        self.policy_steps += 1;
        self.episode_return += reward;
        let terminated = fault.is_some() || attitude_error_angle(self.body.orientation, q_des) > ep.termination_angle;
        let truncated = !terminated && self.steps >= ep.horizon;
        self.done = terminated || truncated;
        StepResult {
            obs: observation(self.body.orientation, q_des, dz),
            reward,
            components,
            terminated,
            truncated,
            fault,
            sq_error,
            compound,
            episode_return: self.done.then_some(self.episode_return),
            episode_length: self.policy_steps,
        }
    }
}
