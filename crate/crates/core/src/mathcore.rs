//! Quaternion algebra, Euler-angle conversions and the fixed-step rigid-body
//! integrator shared by the physics and control code.
//!
//! Conventions: quaternions are scalar-first Hamilton products and describe
//! the body→world rotation. Euler angles are Z-Y-X intrinsic (yaw, then
//! pitch, then roll). The world frame is north-east-down, so positive `z`
//! is depth.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::VehicleParams;

/// Pitch magnitude beyond which the Euler decomposition is considered
/// singular.
pub const GIMBAL_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    /// Componentwise product.
    pub fn hadamard(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn diagonal(d: Vec3) -> Self {
        Mat3([[d.x, 0.0, 0.0], [0.0, d.y, 0.0], [0.0, 0.0, d.z]])
    }

    pub fn diag(&self) -> Vec3 {
        Vec3::new(self.0[0][0], self.0[1][1], self.0[2][2])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` for a singular matrix.
    pub fn inverse(&self) -> Option<Mat3> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        let inv_det = 1.0 / det;
        let mut out = [[0.0; 3]; 3];
        out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
        out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
        out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
        out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
        out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
        out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
        out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
        out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
        out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
        Some(Mat3(out))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let m = &self.0;
        (m[0][1] - m[1][0]).abs() <= tol
            && (m[0][2] - m[2][0]).abs() <= tol
            && (m[1][2] - m[2][1]).abs() <= tol
    }

    /// Sylvester's criterion on leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        let m = &self.0;
        let d1 = m[0][0];
        let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        d1 > 0.0 && d2 > 0.0 && self.determinant() > 0.0
    }
}

/// Unit quaternion `(w, x, y, z)`, kept normalized with `w ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("quaternion ({0}, {1}, {2}, {3}) cannot be normalized")]
pub struct DegenerateQuat(pub f64, pub f64, pub f64, pub f64);

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = DegenerateQuat;
    /// Already-unit input is kept bit-exact so serialized states reload
    /// identically; anything else is renormalized.
    fn try_from(a: [f64; 4]) -> Result<Self, Self::Error> {
        let n2 = a.iter().map(|v| v * v).sum::<f64>();
        if (n2 - 1.0).abs() < 1e-12 {
            return Ok(Self::canonical(a[0], a[1], a[2], a[3]));
        }
        UnitQuat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes and canonicalizes the sign of the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, DegenerateQuat> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(DegenerateQuat(w, x, y, z));
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            UnitQuat { w: -w, x: -x, y: -y, z: -z }
        } else {
            UnitQuat { w, x, y, z }
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return UnitQuat::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis * (s / n);
        UnitQuat::new(c, a.x, a.y, a.z).unwrap_or(UnitQuat::IDENTITY)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conj(self) -> UnitQuat {
        // Conjugation flips the vector part only, so the sign stays canonical
        // except when w == 0.
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Hamilton product `self ⊗ other`.
    pub fn mul(self, o: UnitQuat) -> UnitQuat {
        let (w, x, y, z) = hamilton(
            [self.w, self.x, self.y, self.z],
            [o.w, o.x, o.y, o.z],
        );
        UnitQuat::new(w, x, y, z).expect("product of unit quaternions is non-degenerate")
    }

    /// Rotates a body-frame vector into the world frame.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.rotation_matrix().mul_vec(v)
    }

    /// Rotates a world-frame vector into the body frame.
    pub fn inverse_rotate(self, v: Vec3) -> Vec3 {
        self.rotation_matrix().transpose().mul_vec(v)
    }

    /// Body→world rotation matrix.
    pub fn rotation_matrix(self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    /// Rotation angle in `[0, π]` of this quaternion.
    pub fn angle(self) -> f64 {
        2.0 * self.vector_part().norm().min(1.0).asin()
    }

    pub fn from_euler(e: EulerAngles) -> UnitQuat {
        let (sr, cr) = (0.5 * e.roll).sin_cos();
        let (sp, cp) = (0.5 * e.pitch).sin_cos();
        let (sy, cy) = (0.5 * e.yaw).sin_cos();
        let w = cy * cp * cr + sy * sp * sr;
        let x = cy * cp * sr - sy * sp * cr;
        let y = cy * sp * cr + sy * cp * sr;
        let z = sy * cp * cr - cy * sp * sr;
        UnitQuat::new(w, x, y, z).expect("trigonometric quaternion is non-degenerate")
    }

    pub fn to_euler(self) -> EulerConversion {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let sinp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let pitch = sinp.asin();
        if pitch.abs() > FRAC_PI_2 - GIMBAL_MARGIN {
            // Only yaw − roll (or yaw + roll) is observable; assign it to yaw.
            let yaw = if sinp > 0.0 {
                -2.0 * x.atan2(w)
            } else {
                2.0 * x.atan2(w)
            };
            return EulerConversion {
                angles: EulerAngles { roll: 0.0, pitch, yaw: wrap_angle(yaw) },
                near_gimbal: true,
            };
        }
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        EulerConversion {
            angles: EulerAngles { roll: wrap_angle(roll), pitch, yaw: wrap_angle(yaw) },
            near_gimbal: false,
        }
    }

    /// `q̇ = ½ q ⊗ (0, ω)` advanced by one explicit step and renormalized.
    pub fn integrate(self, ang_vel_body: Vec3, dt: f64) -> Result<UnitQuat, DegenerateQuat> {
        let (dw, dx, dy, dz) = hamilton(
            [self.w, self.x, self.y, self.z],
            [0.0, ang_vel_body.x, ang_vel_body.y, ang_vel_body.z],
        );
        let h = 0.5 * dt;
        UnitQuat::new(self.w + h * dw, self.x + h * dx, self.y + h * dy, self.z + h * dz)
    }
}

fn hamilton(a: [f64; 4], b: [f64; 4]) -> (f64, f64, f64, f64) {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )
}

/// Z-Y-X intrinsic Euler angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles { roll, pitch, yaw }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        EulerAngles::new(a[0], a[1], a[2])
    }

    /// Re-expresses arbitrary angles in the canonical ranges by a round
    /// trip through the quaternion.
    pub fn canonical(self) -> EulerAngles {
        UnitQuat::from_euler(self).to_euler().angles
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerConversion {
    pub angles: EulerAngles,
    /// Set when `|pitch| > π/2 − GIMBAL_MARGIN`; roll is then reported as 0.
    pub near_gimbal: bool,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Pose and body-frame velocities of the vehicle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    /// World frame, metres, `z` positive down.
    pub position: Vec3,
    /// Body→world.
    pub orientation: UnitQuat,
    /// Body frame, m/s.
    pub lin_vel: Vec3,
    /// Body frame, rad/s.
    pub ang_vel: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3, orientation: UnitQuat) -> Self {
        RigidBodyState { position, orientation, lin_vel: Vec3::ZERO, ang_vel: Vec3::ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.lin_vel.is_finite()
            && self.ang_vel.is_finite()
            && self.orientation.to_array().iter().all(|c| c.is_finite())
    }

    /// World-frame velocity.
    pub fn world_velocity(&self) -> Vec3 {
        self.orientation.rotate(self.lin_vel)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsFault {
    #[error("non-finite {quantity} after integration step")]
    NonFinite { quantity: &'static str },
    #[error("time step {0} outside (0, 0.1]")]
    BadTimeStep(f64),
}

/// One semi-implicit Euler step of the Newton–Euler equations in the body
/// frame. Velocities are updated first, then the pose is advanced with the
/// new velocities.
pub fn integrate_step(
    s: &RigidBodyState,
    force: Vec3,
    torque: Vec3,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, PhysicsFault> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(PhysicsFault::BadTimeStep(dt));
    }
    let inertia = &params.inertia;
    let inv_inertia = params.inverse_inertia();
    let m = params.mass;

    let v = s.lin_vel;
    let w = s.ang_vel;
    let lin_acc = force * (1.0 / m) - w.cross(v);
    let ang_acc = inv_inertia.mul_vec(torque - w.cross(inertia.mul_vec(w)));
    let lin_vel = v + lin_acc * dt;
    let ang_vel = w + ang_acc * dt;
    if !lin_vel.is_finite() {
        return Err(PhysicsFault::NonFinite { quantity: "linear velocity" });
    }
    if !ang_vel.is_finite() {
        return Err(PhysicsFault::NonFinite { quantity: "angular velocity" });
    }

    let position = s.position + s.orientation.rotate(lin_vel) * dt;
    if !position.is_finite() {
        return Err(PhysicsFault::NonFinite { quantity: "position" });
    }
    let orientation = s
        .orientation
        .integrate(ang_vel, dt)
        .map_err(|_| PhysicsFault::NonFinite { quantity: "orientation" })?;
    Ok(RigidBodyState { position, orientation, lin_vel, ang_vel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::VehicleParams;
    use proptest::prelude::*;

    fn same_rotation(a: UnitQuat, b: UnitQuat, tol: f64) -> bool {
        let d: f64 = a
            .to_array()
            .iter()
            .zip(b.to_array())
            .map(|(p, q)| p * q)
            .sum();
        (d.abs() - 1.0).abs() < tol
    }

    fn quat_from_seed(a: f64, b: f64, c: f64, d: f64) -> Option<UnitQuat> {
        UnitQuat::new(a, b, c, d).ok()
    }

    #[test]
    fn identity_is_neutral() {
        let q = UnitQuat::new(0.3, -0.2, 0.5, 0.7).unwrap();
        assert!(same_rotation(UnitQuat::IDENTITY.mul(q), q, 1e-15));
        assert!(same_rotation(q.mul(UnitQuat::IDENTITY), q, 1e-15));
    }

    #[test]
    fn product_with_conjugate_is_identity() {
        let q = UnitQuat::new(0.3, -0.2, 0.5, 0.7).unwrap();
        let p = q.mul(q.conj());
        assert!((p.w() - 1.0).abs() < 1e-15);
        assert!(p.vector_part().norm() < 1e-15);
    }

    #[test]
    fn two_quarter_yaws_make_a_half_turn() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = UnitQuat::new(h, 0.0, 0.0, h).unwrap();
        let p = q.mul(q);
        // Oracle: Rz(90°)·Rz(90°) = Rz(180°) = diag(-1, -1, 1).
        let r = p.rotation_matrix();
        let expected = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.0[i][j] - expected[i][j]).abs() < 1e-12);
            }
        }
        assert!(p.w().abs() < 1e-12);
        assert!((p.z().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_sign_is_nonnegative_w() {
        let q = UnitQuat::new(-0.5, 0.5, 0.5, 0.5).unwrap();
        assert!(q.w() > 0.0);
        assert!((q.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_has_zero_euler() {
        let e = UnitQuat::IDENTITY.to_euler();
        assert_eq!(e.angles, EulerAngles::new(0.0, 0.0, 0.0));
        assert!(!e.near_gimbal);
    }

    #[test]
    fn quarter_yaw_euler() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = UnitQuat::new(h, 0.0, 0.0, h).unwrap().to_euler().angles;
        assert!(e.roll.abs() < 1e-12);
        assert!(e.pitch.abs() < 1e-12);
        assert!((e.yaw - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn euler_matches_rotation_matrix_oracle() {
        // R = Rz(yaw) Ry(pitch) Rx(roll) built by hand.
        let (r, p, y) = (0.3_f64, -0.4_f64, 1.1_f64);
        let rx = Mat3([[1.0, 0.0, 0.0], [0.0, r.cos(), -r.sin()], [0.0, r.sin(), r.cos()]]);
        let ry = Mat3([[p.cos(), 0.0, p.sin()], [0.0, 1.0, 0.0], [-p.sin(), 0.0, p.cos()]]);
        let rz = Mat3([[y.cos(), -y.sin(), 0.0], [y.sin(), y.cos(), 0.0], [0.0, 0.0, 1.0]]);
        let mul = |a: &Mat3, b: &Mat3| {
            let mut o = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    o[i][j] = (0..3).map(|k| a.0[i][k] * b.0[k][j]).sum();
                }
            }
            Mat3(o)
        };
        let expected = mul(&rz, &mul(&ry, &rx));
        let got = UnitQuat::from_euler(EulerAngles::new(r, p, y)).rotation_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got.0[i][j] - expected.0[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gimbal_is_flagged_and_rotation_preserved() {
        let q = UnitQuat::from_euler(EulerAngles::new(0.4, FRAC_PI_2, 0.9));
        let e = q.to_euler();
        assert!(e.near_gimbal);
        assert_eq!(e.angles.roll, 0.0);
        assert!(same_rotation(UnitQuat::from_euler(e.angles), q, 1e-9));

        let q = UnitQuat::from_euler(EulerAngles::new(0.4, -FRAC_PI_2, 0.9));
        let e = q.to_euler();
        assert!(e.near_gimbal);
        assert!(same_rotation(UnitQuat::from_euler(e.angles), q, 1e-9));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(6.2) - (6.2 - 2.0 * PI)).abs() < 1e-15);
        assert!((wrap_angle(3.1 - (-3.1)) + 0.0831853071795862).abs() < 1e-12);
    }

    #[test]
    fn at_rest_without_load_is_unchanged() {
        let p = VehicleParams::nominal();
        let s = RigidBodyState::at_rest(Vec3::new(0.1, 0.2, 1.0), UnitQuat::new(0.9, 0.1, 0.2, 0.3).unwrap());
        let n = integrate_step(&s, Vec3::ZERO, Vec3::ZERO, &p, 0.01).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn constant_force_matches_closed_form() {
        let p = VehicleParams::nominal();
        let f = 4.5;
        let dt = 0.01;
        let mut s = RigidBodyState::default();
        let n = 250;
        for _ in 0..n {
            s = integrate_step(&s, Vec3::new(0.0, 0.0, f), Vec3::ZERO, &p, dt).unwrap();
        }
        let expected = n as f64 * dt * f / p.mass;
        assert!((s.lin_vel.z - expected).abs() < 1e-12 * expected);
        // Semi-implicit position: dt² a · n(n+1)/2.
        let expected_z = dt * dt * (f / p.mass) * (n * (n + 1)) as f64 / 2.0;
        assert!((s.position.z - expected_z).abs() < 1e-10);
    }

    #[test]
    fn principal_axis_spin_is_conserved() {
        let p = VehicleParams::nominal();
        let mut s = RigidBodyState { ang_vel: Vec3::new(0.0, 0.0, 2.5), ..Default::default() };
        for _ in 0..1000 {
            s = integrate_step(&s, Vec3::ZERO, Vec3::ZERO, &p, 0.01).unwrap();
            assert!((s.orientation.norm() - 1.0).abs() < 1e-9);
        }
        assert!((s.ang_vel.z - 2.5).abs() < 1e-9);
        assert!(s.ang_vel.x.abs() < 1e-9 && s.ang_vel.y.abs() < 1e-9);
    }

    #[test]
    fn bad_dt_is_rejected() {
        let p = VehicleParams::nominal();
        let s = RigidBodyState::default();
        assert!(integrate_step(&s, Vec3::ZERO, Vec3::ZERO, &p, 0.0).is_err());
        assert!(integrate_step(&s, Vec3::ZERO, Vec3::ZERO, &p, 0.2).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let p = VehicleParams::nominal();
        let s = RigidBodyState::default();
        let err = integrate_step(&s, Vec3::new(f64::NAN, 0.0, 0.0), Vec3::ZERO, &p, 0.01).unwrap_err();
        assert_eq!(err, PhysicsFault::NonFinite { quantity: "linear velocity" });
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter_map("degenerate", |(a, b, c, d)| {
                if a * a + b * b + c * c + d * d < 1e-3 {
                    None
                } else {
                    quat_from_seed(a, b, c, d)
                }
            })
    }

    proptest! {
        #[test]
        fn mul_is_associative(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let l = a.mul(b).mul(c);
            let r = a.mul(b.mul(c));
            prop_assert!(same_rotation(l, r, 1e-9));
        }

        #[test]
        fn mul_output_is_unit(a in arb_quat(), b in arb_quat()) {
            let p = a.mul(b);
            prop_assert!((p.norm() - 1.0).abs() < 1e-9);
            prop_assert!(p.w() >= 0.0);
        }

        #[test]
        fn euler_round_trip(q in arb_quat()) {
            let e = q.to_euler();
            prop_assume!(e.angles.pitch.abs() < 1.4);
            let back = UnitQuat::from_euler(e.angles);
            prop_assert!(same_rotation(back, q, 1e-12));
            let again = back.to_euler().angles;
            prop_assert!((wrap_angle(again.roll - e.angles.roll)).abs() < 1e-9);
            prop_assert!((again.pitch - e.angles.pitch).abs() < 1e-9);
            prop_assert!((wrap_angle(again.yaw - e.angles.yaw)).abs() < 1e-9);
        }

        #[test]
        fn integrate_step_is_deterministic(
            q in arb_quat(),
            wx in -3.0..3.0f64, wy in -3.0..3.0f64, wz in -3.0..3.0f64,
            fx in -10.0..10.0f64, tz in -2.0..2.0f64,
        ) {
            let p = VehicleParams::nominal();
            let mut s = RigidBodyState::at_rest(Vec3::ZERO, q);
            s.ang_vel = Vec3::new(wx, wy, wz);
            let a = integrate_step(&s, Vec3::new(fx, 0.0, 0.0), Vec3::new(0.0, 0.0, tz), &p, 0.01).unwrap();
            let b = integrate_step(&s, Vec3::new(fx, 0.0, 0.0), Vec3::new(0.0, 0.0, tz), &p, 0.01).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((a.orientation.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn thousand_random_round_trips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let q = match UnitQuat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ) {
                Ok(q) => q,
                Err(_) => continue,
            };
            let e = q.to_euler().angles;
            if e.pitch.abs() >= 1.4 {
                continue;
            }
            assert!(same_rotation(UnitQuat::from_euler(e), q, 1e-12));
            checked += 1;
        }
    }
}
