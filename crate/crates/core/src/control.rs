//! Per-channel attitude and depth controllers.
//!
//! Three channel laws are available: PID, the sigmoid S-Surface law, and the
//! adaptive S-Surface law that adds a compensation term `Δu` updated from the
//! error and the sign of the last output. Four channels (roll, pitch, yaw,
//! depth) make up an [`AttitudeController`], which maps setpoints and the
//! vehicle state to a commanded body wrench.

use serde::{Deserialize, Serialize};

use crate::hydro::Wrench;
use crate::mathcore::{wrap_angle, EulerAngles, RigidBodyState, UnitQuat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pid,
    #[serde(rename = "ssurface")]
    SSurface,
    #[serde(rename = "assurface")]
    ASSurface,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Pid, ControllerKind::SSurface, ControllerKind::ASSurface];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::SSurface => "ssurface",
            ControllerKind::ASSurface => "assurface",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pid" => Ok(ControllerKind::Pid),
            "ssurface" | "s-surface" => Ok(ControllerKind::SSurface),
            "assurface" | "a-s-surface" => Ok(ControllerKind::ASSurface),
            other => Err(format!("unknown controller kind '{other}' (expected pid, ssurface or assurface)")),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Error and error rate seen by one channel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChannelError {
    pub e: f64,
    pub e_dot: f64,
}

impl ChannelError {
    pub fn new(e: f64, e_dot: f64) -> Self {
        ChannelError { e, e_dot }
    }
}

/// Gains and internal state of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelController {
    pub kind: ControllerKind,
    pub zeta1: f64,
    pub zeta2: f64,
    /// Adaptation rate of `delta_u`.
    pub alpha: f64,
    pub delta_u: f64,
    pub delta_u_max: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integrator: f64,
    pub integrator_max: f64,
    /// Physical units per unit of normalized output (N·m or N).
    pub output_scale: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

pub const DEFAULT_DELTA_U_MAX: f64 = 0.5;
pub const DEFAULT_INTEGRATOR_MAX: f64 = 0.5;

impl ChannelController {
    /// Defaults for an attitude channel (output in N·m).
    pub fn attitude(kind: ControllerKind) -> Self {
        ChannelController {
            kind,
            zeta1: 4.0,
            zeta2: 2.0,
            alpha: 0.02,
            delta_u: 0.0,
            delta_u_max: DEFAULT_DELTA_U_MAX,
            kp: 3.0,
            ki: 0.2,
            kd: 1.5,
            integrator: 0.0,
            integrator_max: DEFAULT_INTEGRATOR_MAX,
            output_scale: 2.0,
            enabled: true,
        }
    }

    /// Defaults for the depth channel (output in N).
    pub fn depth(kind: ControllerKind) -> Self {
        ChannelController { zeta1: 2.0, zeta2: 3.0, output_scale: 15.0, ..Self::attitude(kind) }
    }

    /// Clears the adaptive term and the integrator.
    pub fn reset_state(&mut self) {
        self.delta_u = 0.0;
        self.integrator = 0.0;
    }

    /// Normalized output of this channel's law and the updated channel.
    pub fn step(&self, err: ChannelError, dt: f64) -> (f64, ChannelController) {
        if !self.enabled {
            return (0.0, self.clone());
        }
        match self.kind {
            ControllerKind::Pid => pid_output(self, err, dt),
            ControllerKind::SSurface => (s_surface_output(self, err), self.clone()),
            ControllerKind::ASSurface => {
                let u = s_surface_output(self, err);
                (u, adapt_update(self, err, u))
            }
        }
    }
}

/// `u = 2 / (1 + exp(−ζ₁e − ζ₂ė)) − 1 + Δu`, with `Δu ≡ 0` for the plain law.
pub fn s_surface_output(st: &ChannelController, err: ChannelError) -> f64 {
    let s = st.zeta1 * err.e + st.zeta2 * err.e_dot;
    let sigmoid = 2.0 / (1.0 + (-s).exp()) - 1.0;
    match st.kind {
        ControllerKind::ASSurface => sigmoid + st.delta_u,
        _ => sigmoid,
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Δu ← clamp(Δu + α·e·sign(u), ±Δu_max)`.
pub fn adapt_update(st: &ChannelController, err: ChannelError, u: f64) -> ChannelController {
    let mut next = st.clone();
    next.delta_u = (st.delta_u + st.alpha * err.e * sign(u)).clamp(-st.delta_u_max, st.delta_u_max);
    next
}

/// PID with a clamped integrator; output clamped to `[−1, 1]`.
pub fn pid_output(st: &ChannelController, err: ChannelError, dt: f64) -> (f64, ChannelController) {
    let mut next = st.clone();
    next.integrator = (st.integrator + err.e * dt).clamp(-st.integrator_max, st.integrator_max);
    let u = st.kp * err.e + st.ki * next.integrator + st.kd * err.e_dot;
    (u.clamp(-1.0, 1.0), next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Roll,
    Pitch,
    Yaw,
    Depth,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Roll, Channel::Pitch, Channel::Yaw, Channel::Depth];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Roll => "roll",
            Channel::Pitch => "pitch",
            Channel::Yaw => "yaw",
            Channel::Depth => "depth",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown channel '{s}'"))
    }
}

/// Attitude (rad) and depth (m) setpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Setpoints {
    pub attitude: EulerAngles,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeController {
    pub roll: ChannelController,
    pub pitch: ChannelController,
    pub yaw: ChannelController,
    pub depth: ChannelController,
}

/// Result of one controller evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub wrench: Wrench,
    /// Normalized channel outputs, in `Channel::ALL` order.
    pub outputs: [f64; 4],
    pub errors: [ChannelError; 4],
    pub near_gimbal: bool,
}

impl AttitudeController {
    pub fn new(kind: ControllerKind) -> Self {
        AttitudeController {
            roll: ChannelController::attitude(kind),
            pitch: ChannelController::attitude(kind),
            yaw: ChannelController::attitude(kind),
            depth: ChannelController::depth(kind),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.roll.kind
    }

    pub fn channel(&self, c: Channel) -> &ChannelController {
        match c {
            Channel::Roll => &self.roll,
            Channel::Pitch => &self.pitch,
            Channel::Yaw => &self.yaw,
            Channel::Depth => &self.depth,
        }
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut ChannelController {
        match c {
            Channel::Roll => &mut self.roll,
            Channel::Pitch => &mut self.pitch,
            Channel::Yaw => &mut self.yaw,
            Channel::Depth => &mut self.depth,
        }
    }

    pub fn reset_state(&mut self) {
        for c in Channel::ALL {
            self.channel_mut(c).reset_state();
        }
    }

    /// Evaluates all four channels and returns the commanded body wrench
    /// together with the updated controller.
    pub fn step(&self, sp: &Setpoints, s: &RigidBodyState, dt: f64) -> (ControlOutput, AttitudeController) {
        let conv = s.orientation.to_euler();
        let current = conv.angles;
        // Setpoints beyond ±π/2 pitch are re-expressed in canonical form so
        // errors are taken against the same representation as the state.
        let target = UnitQuat::from_euler(sp.attitude).to_euler().angles;
        let rates = euler_rates(current, s.ang_vel, conv.near_gimbal);

        let errors = [
            ChannelError::new(wrap_angle(target.roll - current.roll), -rates.x),
            ChannelError::new(wrap_angle(target.pitch - current.pitch), -rates.y),
            ChannelError::new(wrap_angle(target.yaw - current.yaw), -rates.z),
            ChannelError::new(sp.depth - s.position.z, -s.world_velocity().z),
        ];

        let mut next = self.clone();
        let mut outputs = [0.0; 4];
        for (i, c) in Channel::ALL.into_iter().enumerate() {
            let (u, updated) = self.channel(c).step(errors[i], dt);
            outputs[i] = u;
            *next.channel_mut(c) = updated;
        }

        let torque = Vec3::new(
            outputs[0] * self.roll.output_scale,
            outputs[1] * self.pitch.output_scale,
            outputs[2] * self.yaw.output_scale,
        );
        // Depth acts along world vertical, expressed in the body frame.
        let heave = s.orientation.inverse_rotate(Vec3::new(0.0, 0.0, outputs[3] * self.depth.output_scale));
        let out = ControlOutput {
            wrench: Wrench::new(heave, torque),
            outputs,
            errors,
            near_gimbal: conv.near_gimbal,
        };
        (out, next)
    }
}

/// Body rates → Z-Y-X Euler rates; raw body rates near the singularity.
pub fn euler_rates(e: EulerAngles, w: Vec3, near_gimbal: bool) -> Vec3 {
    if near_gimbal {
        return w;
    }
    let (sr, cr) = e.roll.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let tp = sp / cp;
    Vec3::new(
        w.x + sr * tp * w.y + cr * tp * w.z,
        cr * w.y - sr * w.z,
        (sr * w.y + cr * w.z) / cp,
    )
}
