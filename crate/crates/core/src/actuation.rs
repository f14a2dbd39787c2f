//! Thruster force curve, its inverse, and wrench allocation over eight
//! thrusters.
//!
//! The force curve is a piecewise quadratic fit of a T200-class thruster at
//! 16 V over the normalized command `a ∈ [−1, 1]`. It is evaluated verbatim,
//! including the small negative dip of the upper branch on `(0.08, 0.0853)`;
//! the inverse only targets the monotone parts beyond each branch zero.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::Wrench;
use crate::mathcore::Vec3;

pub const NUM_THRUSTERS: usize = 8;

const UPPER: (f64, f64, f64) = (29.54, 26.10, -2.44);
const LOWER: (f64, f64, f64) = (-21.75, 21.75, 2.07);
pub const DEADBAND: f64 = 0.08;

/// Largest forward thrust, at `a = 1` (N).
pub const MAX_FORWARD_THRUST: f64 = UPPER.0 + UPPER.1 + UPPER.2;
/// Largest reverse thrust, at `a = −1` (N, negative).
pub const MAX_REVERSE_THRUST: f64 = LOWER.0 - LOWER.1 + LOWER.2;

/// Thrust (N) for a normalized command; inputs outside `[−1, 1]` are clamped.
pub fn thrust_from_command(a: f64) -> f64 {
    let a = a.clamp(-1.0, 1.0);
    if a > DEADBAND {
        UPPER.0 * a * a + UPPER.1 * a + UPPER.2
    } else if a >= -DEADBAND {
        0.0
    } else {
        LOWER.0 * a * a + LOWER.1 * a + LOWER.2
    }
}

/// Zero of the upper branch (≈ 0.0853): start of its monotone region.
pub fn upper_branch_zero() -> f64 {
    let (a2, a1, a0) = UPPER;
    (-a1 + (a1 * a1 - 4.0 * a2 * a0).sqrt()) / (2.0 * a2)
}

/// Zero of the lower branch (≈ −0.0875): start of its monotone region.
pub fn lower_branch_zero() -> f64 {
    let (a2, a1, a0) = LOWER;
    // a2 < 0: the root closest to zero from below.
    (-a1 + (a1 * a1 - 4.0 * a2 * a0).sqrt()) / (2.0 * a2)
}

/// Inverse of [`thrust_from_command`] on its monotone regions. Zero thrust
/// maps to the deadband; thrust beyond what the curve can produce saturates.
pub fn command_from_thrust(tau: f64) -> f64 {
    if tau == 0.0 || tau.is_nan() {
        0.0
    } else if tau > 0.0 {
        if tau >= MAX_FORWARD_THRUST {
            return 1.0;
        }
        let (a2, a1, a0) = UPPER;
        let c = a0 - tau;
        ((-a1 + (a1 * a1 - 4.0 * a2 * c).sqrt()) / (2.0 * a2)).clamp(upper_branch_zero(), 1.0)
    } else {
        if tau <= MAX_REVERSE_THRUST {
            return -1.0;
        }
        let (a2, a1, a0) = LOWER;
        let c = a0 - tau;
        ((-a1 + (a1 * a1 - 4.0 * a2 * c).sqrt()) / (2.0 * a2)).clamp(-1.0, lower_branch_zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrusterMount {
    /// Body frame, m, relative to the COM.
    pub position: Vec3,
    /// Unit thrust direction, body frame.
    pub direction: Vec3,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("expected {NUM_THRUSTERS} thrusters, got {0}")]
    Count(usize),
    #[error("thruster {0} has a zero or non-finite direction")]
    Direction(usize),
    #[error("allocation matrix has rank {0}, need 6 for full actuation")]
    Rank(usize),
}

/// Thruster geometry plus the precomputed allocation matrix and its
/// pseudo-inverse. Serialized as the list of mounts only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutSpec", into = "LayoutSpec")]
pub struct ThrusterLayout {
    thrusters: [ThrusterMount; NUM_THRUSTERS],
    /// Rows: force xyz, torque xyz. Column `i`: unit wrench of thruster `i`.
    allocation: SMatrix<f64, 6, NUM_THRUSTERS>,
    pseudo_inverse: SMatrix<f64, NUM_THRUSTERS, 6>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub thrusters: Vec<ThrusterMount>,
}

impl TryFrom<LayoutSpec> for ThrusterLayout {
    type Error = LayoutError;
    fn try_from(s: LayoutSpec) -> Result<Self, Self::Error> {
        ThrusterLayout::new(&s.thrusters)
    }
}

impl From<ThrusterLayout> for LayoutSpec {
    fn from(l: ThrusterLayout) -> Self {
        LayoutSpec { thrusters: l.thrusters.to_vec() }
    }
}

impl Default for ThrusterLayout {
    /// Heavy-ROV style: four horizontal thrusters vectored at 45° and four
    /// vertical thrusters, all at the corners `(±0.12, ±0.10, 0)` m.
    fn default() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let corners = [(0.12, 0.10), (0.12, -0.10), (-0.12, 0.10), (-0.12, -0.10)];
        // Front-right, front-left, rear-right, rear-left horizontal directions
        // chosen so surge, sway and yaw use orthogonal sign patterns.
        let horizontal = [(c, -c), (c, c), (c, c), (c, -c)];
        let mut mounts = Vec::with_capacity(NUM_THRUSTERS);
        for (&(x, y), &(dx, dy)) in corners.iter().zip(&horizontal) {
            mounts.push(ThrusterMount { position: Vec3::new(x, y, 0.0), direction: Vec3::new(dx, dy, 0.0) });
        }
        for &(x, y) in &corners {
            mounts.push(ThrusterMount { position: Vec3::new(x, y, 0.0), direction: Vec3::new(0.0, 0.0, 1.0) });
        }
        ThrusterLayout::new(&mounts).expect("default layout is fully actuated")
    }
}

impl ThrusterLayout {
    pub fn new(mounts: &[ThrusterMount]) -> Result<Self, LayoutError> {
        if mounts.len() != NUM_THRUSTERS {
            return Err(LayoutError::Count(mounts.len()));
        }
        let mut thrusters = [mounts[0]; NUM_THRUSTERS];
        let mut allocation = SMatrix::<f64, 6, NUM_THRUSTERS>::zeros();
        for (i, m) in mounts.iter().enumerate() {
            let n = m.direction.norm();
            if !(n.is_finite() && n > 0.0) || !m.position.is_finite() {
                return Err(LayoutError::Direction(i));
            }
            let d = m.direction * (1.0 / n);
            thrusters[i] = ThrusterMount { position: m.position, direction: d };
            let t = m.position.cross(d);
            let col = [d.x, d.y, d.z, t.x, t.y, t.z];
            for (r, v) in col.into_iter().enumerate() {
                allocation[(r, i)] = v;
            }
        }
        let svd = allocation.svd(true, true);
        let rank = svd.rank(1e-9);
        if rank < 6 {
            return Err(LayoutError::Rank(rank));
        }
        let pseudo_inverse = svd.pseudo_inverse(1e-12).map_err(|_| LayoutError::Rank(rank))?;
        Ok(ThrusterLayout { thrusters, allocation, pseudo_inverse })
    }

    pub fn thrusters(&self) -> &[ThrusterMount; NUM_THRUSTERS] {
        &self.thrusters
    }

    pub fn allocation_matrix(&self) -> &SMatrix<f64, 6, NUM_THRUSTERS> {
        &self.allocation
    }

    pub fn pseudo_inverse(&self) -> &SMatrix<f64, NUM_THRUSTERS, 6> {
        &self.pseudo_inverse
    }

    /// Minimum-norm per-thruster forces reproducing `w`.
    pub fn thruster_forces(&self, w: &Wrench) -> [f64; NUM_THRUSTERS] {
        let f = self.pseudo_inverse * SVector::<f64, 6>::from(w.to_array());
        let mut out = [0.0; NUM_THRUSTERS];
        out.copy_from_slice(f.as_slice());
        out
    }

    /// Net body wrench of the given per-thruster forces.
    pub fn wrench_from_forces(&self, f: &[f64; NUM_THRUSTERS]) -> Wrench {
        let w = self.allocation * SVector::<f64, NUM_THRUSTERS>::from(*f);
        Wrench::from_array([w[0], w[1], w[2], w[3], w[4], w[5]])
    }

    pub fn allocate(&self, w: &Wrench) -> Allocation {
        let forces = self.thruster_forces(w);
        let mut command = [0.0; NUM_THRUSTERS];
        let mut saturated = 0usize;
        for (c, &f) in command.iter_mut().zip(&forces) {
            if !(MAX_REVERSE_THRUST..=MAX_FORWARD_THRUST).contains(&f) {
                saturated += 1;
            }
            *c = command_from_thrust(f);
        }
        Allocation {
            command: ThrusterCommand::new(command),
            forces,
            saturation_fraction: saturated as f64 / NUM_THRUSTERS as f64,
        }
    }
}

/// Normalized thruster commands, each clamped to `[−1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThrusterCommand([f64; NUM_THRUSTERS]);

impl ThrusterCommand {
    pub fn new(a: [f64; NUM_THRUSTERS]) -> Self {
        ThrusterCommand(a.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) }))
    }

    pub fn values(&self) -> &[f64; NUM_THRUSTERS] {
        &self.0
    }

    /// Per-thruster thrust (N).
    pub fn thrust(&self) -> [f64; NUM_THRUSTERS] {
        self.0.map(thrust_from_command)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub command: ThrusterCommand,
    /// Requested per-thruster forces before saturation (N).
    pub forces: [f64; NUM_THRUSTERS],
    /// Fraction of thrusters whose requested force exceeds the curve range.
    pub saturation_fraction: f64,
}
