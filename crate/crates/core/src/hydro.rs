//! Phenomenological fluid forces on an equivalent inertia box, plus the
//! gravity/buoyancy restoring wrench.
//!
//! The box half-dimensions come from the mass and inertia tensor. Drag is
//! quadratic per body axis and viscous damping is linear in `r_eq`. Ambient
//! fluid is taken to be at rest; currents are modelled separately as wrench
//! disturbances in the environment.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::ThrusterLayout;
use crate::mathcore::{Mat3, RigidBodyState, Vec3};

/// Half-dimensions of the nominal vehicle's solid-box inertia model (m).
pub const NOMINAL_HALF_DIMS: Vec3 = Vec3::new(0.15, 0.125, 0.10);
pub const NOMINAL_MASS: f64 = 2.25;
/// 2.25 L, neutrally buoyant at 1000 kg/m³.
pub const NOMINAL_VOLUME: f64 = 2.25e-3;
pub const NOMINAL_COB_OFFSET: Vec3 = Vec3::new(0.0, 0.0, -0.02);
pub const WATER_DENSITY: f64 = 1000.0;
/// Water at 20 °C, Pa·s.
pub const WATER_VISCOSITY: f64 = 1.0e-3;
pub const GRAVITY: f64 = 9.81;

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("mass must be positive, got {0}")]
    Mass(f64),
    #[error("volume must be positive, got {0}")]
    Volume(f64),
    #[error("fluid density must be positive, got {0}")]
    Density(f64),
    #[error("viscosity must be non-negative, got {0}")]
    Viscosity(f64),
    #[error("inertia tensor is not symmetric positive definite")]
    Inertia,
    #[error("inertia violates the triangle inequality on the {axis} axis (I_jj + I_kk - I_ii = {value})")]
    Triangle { axis: &'static str, value: f64 },
    #[error("non-finite vehicle parameter: {0}")]
    NonFinite(&'static str),
}

/// Rigid-body, fluid and actuator description of one vehicle instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m², body frame about the COM.
    pub inertia: Mat3,
    /// m³
    pub volume: f64,
    /// COB minus COM, body frame, m. Negative `z` puts the COB above the COM.
    pub cob_offset: Vec3,
    /// kg/m³
    pub fluid_density: f64,
    /// Pa·s
    pub viscosity: f64,
    /// m/s²
    pub gravity: f64,
    pub layout: ThrusterLayout,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams::nominal()
    }
}

impl VehicleParams {
    pub fn nominal() -> Self {
        VehicleParams {
            mass: NOMINAL_MASS,
            inertia: solid_box_inertia(NOMINAL_MASS, NOMINAL_HALF_DIMS),
            volume: NOMINAL_VOLUME,
            cob_offset: NOMINAL_COB_OFFSET,
            fluid_density: WATER_DENSITY,
            viscosity: WATER_VISCOSITY,
            gravity: GRAVITY,
            layout: ThrusterLayout::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            (self.mass, "mass"),
            (self.volume, "volume"),
            (self.fluid_density, "fluid_density"),
            (self.viscosity, "viscosity"),
            (self.gravity, "gravity"),
        ];
        for (v, name) in finite {
            if !v.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        if !self.cob_offset.is_finite() {
            return Err(ParamError::NonFinite("cob_offset"));
        }
        if self.mass <= 0.0 {
            return Err(ParamError::Mass(self.mass));
        }
        if self.volume <= 0.0 {
            return Err(ParamError::Volume(self.volume));
        }
        if self.fluid_density <= 0.0 {
            return Err(ParamError::Density(self.fluid_density));
        }
        if self.viscosity < 0.0 {
            return Err(ParamError::Viscosity(self.viscosity));
        }
        if !self.inertia.is_symmetric(1e-12) || !self.inertia.is_positive_definite() {
            return Err(ParamError::Inertia);
        }
        EquivalentBox::from_mass_inertia(self.mass, &self.inertia)?;
        Ok(())
    }

    pub fn inverse_inertia(&self) -> Mat3 {
        self.inertia.inverse().expect("validated inertia is invertible")
    }

    pub fn equivalent_box(&self) -> EquivalentBox {
        EquivalentBox::from_mass_inertia(self.mass, &self.inertia)
            .expect("validated inertia yields a real equivalent box")
    }

    /// Buoyant force magnitude ρ·V·g (N).
    pub fn buoyancy(&self) -> f64 {
        self.fluid_density * self.volume * self.gravity
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Inertia tensor of a uniform solid box with the given half-dimensions.
pub fn solid_box_inertia(mass: f64, half: Vec3) -> Mat3 {
    let (x2, y2, z2) = (half.x * half.x, half.y * half.y, half.z * half.z);
    Mat3::diagonal(Vec3::new(
        mass * (y2 + z2) / 3.0,
        mass * (x2 + z2) / 3.0,
        mass * (x2 + y2) / 3.0,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalentBox {
    /// Half-dimensions (m).
    pub r: Vec3,
    /// Mean half-dimension (m).
    pub r_eq: f64,
}

impl EquivalentBox {
    /// `r_i = sqrt(3/(2m) · (I_jj + I_kk − I_ii))` per axis.
    pub fn from_mass_inertia(mass: f64, inertia: &Mat3) -> Result<Self, ParamError> {
        if !(mass > 0.0) {
            return Err(ParamError::Mass(mass));
        }
        let d = inertia.diag();
        let d = [d.x, d.y, d.z];
        let mut r = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let s = d[j] + d[k] - d[i];
            if !(s > 0.0) {
                return Err(ParamError::Triangle { axis: AXIS_NAMES[i], value: s });
            }
            r[i] = (3.0 / (2.0 * mass) * s).sqrt();
        }
        Ok(EquivalentBox {
            r: Vec3::from_array(r),
            r_eq: (r[0] + r[1] + r[2]) / 3.0,
        })
    }
}

/// Body-frame force and torque pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench { force: Vec3::ZERO, torque: Vec3::ZERO };

    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Wrench { force, torque }
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Wrench::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]))
    }

    pub fn is_finite(&self) -> bool {
        self.force.is_finite() && self.torque.is_finite()
    }

    pub fn scaled(self, s: f64) -> Wrench {
        Wrench::new(self.force * s, self.torque * s)
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, o: Wrench) -> Wrench {
        Wrench::new(self.force + o.force, self.torque + o.torque)
    }
}

/// Quadratic drag: `f_i = −2ρ r_j r_k |v_i| v_i`,
/// `g_i = −½ρ r_i (r_j⁴ + r_k⁴) |ω_i| ω_i`.
pub fn drag_wrench(b: &EquivalentBox, v: Vec3, w: Vec3, rho: f64) -> Wrench {
    let r = b.r.to_array();
    let v = v.to_array();
    let w = w.to_array();
    let mut f = [0.0; 3];
    let mut g = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        f[i] = -2.0 * rho * r[j] * r[k] * v[i].abs() * v[i];
        g[i] = -0.5 * rho * r[i] * (r[j].powi(4) + r[k].powi(4)) * w[i].abs() * w[i];
    }
    Wrench::new(Vec3::from_array(f), Vec3::from_array(g))
}

/// Linear viscous damping: `f_i = −6βπ r_eq v_i`, `g_i = −8βπ r_eq³ ω_i`.
pub fn viscous_wrench(b: &EquivalentBox, v: Vec3, w: Vec3, beta: f64) -> Wrench {
    let kf = -6.0 * beta * PI * b.r_eq;
    let kt = -8.0 * beta * PI * b.r_eq.powi(3);
    Wrench::new(v * kf, w * kt)
}

/// Drag plus viscous wrench for the current body velocities.
pub fn hydrodynamic_wrench(b: &EquivalentBox, s: &RigidBodyState, p: &VehicleParams) -> Wrench {
    drag_wrench(b, s.lin_vel, s.ang_vel, p.fluid_density)
        + viscous_wrench(b, s.lin_vel, s.ang_vel, p.viscosity)
}

/// Gravity at the COM and buoyancy at the COB, in the body frame.
pub fn restoring_wrench(s: &RigidBodyState, p: &VehicleParams) -> Wrench {
    let q = s.orientation;
    let gravity_body = q.inverse_rotate(Vec3::new(0.0, 0.0, p.weight()));
    let buoyancy_body = q.inverse_rotate(Vec3::new(0.0, 0.0, -p.buoyancy()));
    Wrench::new(gravity_body + buoyancy_body, p.cob_offset.cross(buoyancy_body))
}
