//! Quadrotor rigid-body model.
//!
//! State `x = [p, q, v, w]` (13 entries, quaternion scalar-first, body
//! rates in the body frame), input `u = [T1, T2, T3, T4]` rotor thrusts.
//! The model functions are generic over [`Scalar`] so the same code serves
//! plain evaluation, Jacobians and Hessians.

use cpc_nlp::ad::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_DIM: usize = 13;
pub const INPUT_DIM: usize = 4;
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("thrust limits must satisfy 0 <= min < max, got [{min}, {max}]")]
    ThrustLimits { min: f64, max: f64 },
    #[error("hover infeasible: weight {weight:.4} N exceeds 4 * thrust_max = {max_total:.4} N")]
    HoverInfeasible { weight: f64, max_total: f64 },
    #[error("drag needs v_max > 0 and 4 * thrust_max / mass > gravity")]
    Drag,
    #[error("unknown quadrotor configuration {0:?}")]
    UnknownPreset(String),
}

/// Physical parameters of one quadrotor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadConfigFile", into = "QuadConfigFile")]
pub struct QuadConfig {
    pub name: String,
    pub mass: f64,
    pub arm_length: f64,
    /// Principal moments of inertia, kg m^2.
    pub inertia: [f64; 3],
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub torque_constant: f64,
    pub omega_max: f64,
    /// Top speed used to size the linear drag; `None` disables drag.
    pub v_max: Option<f64>,
    pub gravity: f64,
}

/// On-disk form with units in the field names. Inertia is stored in
/// g m^2 as in the published table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadConfigFile {
    #[serde(default)]
    name: String,
    mass_kg: f64,
    arm_length_m: f64,
    inertia_diag_gm2: [f64; 3],
    thrust_min_n: f64,
    thrust_max_n: f64,
    torque_constant: f64,
    omega_max_rad_s: f64,
    #[serde(default)]
    v_max_m_s: Option<f64>,
    #[serde(default = "default_gravity")]
    gravity_m_s2: f64,
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl TryFrom<QuadConfigFile> for QuadConfig {
    type Error = ConfigError;
    fn try_from(f: QuadConfigFile) -> Result<Self, ConfigError> {
        let cfg = QuadConfig {
            name: f.name,
            mass: f.mass_kg,
            arm_length: f.arm_length_m,
            inertia: f.inertia_diag_gm2.map(|j| j * 1e-3),
            thrust_min: f.thrust_min_n,
            thrust_max: f.thrust_max_n,
            torque_constant: f.torque_constant,
            omega_max: f.omega_max_rad_s,
            v_max: f.v_max_m_s,
            gravity: f.gravity_m_s2,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<QuadConfig> for QuadConfigFile {
    fn from(c: QuadConfig) -> Self {
        QuadConfigFile {
            name: c.name,
            mass_kg: c.mass,
            arm_length_m: c.arm_length,
            inertia_diag_gm2: c.inertia.map(|j| j * 1e3),
            thrust_min_n: c.thrust_min,
            thrust_max_n: c.thrust_max,
            torque_constant: c.torque_constant,
            omega_max_rad_s: c.omega_max,
            v_max_m_s: c.v_max,
            gravity_m_s2: c.gravity,
        }
    }
}

const PRESETS: [(&str, &str); 4] = [
    ("RQ", include_str!("../data/rq.json")),
    ("MS", include_str!("../data/ms.json")),
    ("SIM", include_str!("../data/sim.json")),
    ("STD", include_str!("../data/std.json")),
];

impl QuadConfig {
    /// One of the shipped configurations `RQ`, `MS`, `SIM`, `STD`
    /// (case-insensitive).
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Ok(serde_json::from_str(text).expect("shipped configuration parses"))
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn rq() -> Self {
        Self::preset("RQ").unwrap()
    }
    pub fn ms() -> Self {
        Self::preset("MS").unwrap()
    }
    pub fn sim() -> Self {
        Self::preset("SIM").unwrap()
    }
    pub fn standard() -> Self {
        Self::preset("STD").unwrap()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("inertia_x", self.inertia[0]),
            ("inertia_y", self.inertia[1]),
            ("inertia_z", self.inertia[2]),
            ("omega_max", self.omega_max),
            ("gravity", self.gravity),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(ConfigError::NotPositive { field, value });
            }
        }
        if !(0.0 <= self.thrust_min && self.thrust_min < self.thrust_max) {
            return Err(ConfigError::ThrustLimits {
                min: self.thrust_min,
                max: self.thrust_max,
            });
        }
        let weight = self.mass * self.gravity;
        if 4.0 * self.thrust_max <= weight {
            return Err(ConfigError::HoverInfeasible {
                weight,
                max_total: 4.0 * self.thrust_max,
            });
        }
        if self.v_max.is_some() {
            self.drag_coefficient()?;
        }
        Ok(())
    }

    /// Linear drag coefficient `sqrt((4 T_max / m)^2 - g^2) / v_max` that
    /// cancels full thrust in level flight at `v_max`.
    pub fn drag_coefficient(&self) -> Result<f64, ConfigError> {
        let v_max = match self.v_max {
            Some(v) if v > 0.0 => v,
            _ => return Err(ConfigError::Drag),
        };
        let a = 4.0 * self.thrust_max / self.mass;
        let rad = a * a - self.gravity * self.gravity;
        if rad < 0.0 {
            return Err(ConfigError::Drag);
        }
        Ok(rad.sqrt() / v_max)
    }

    /// Drag coefficient used by the dynamics: zero when drag is disabled.
    pub fn drag(&self) -> f64 {
        match self.v_max {
            None => 0.0,
            Some(_) => self.drag_coefficient().unwrap_or(0.0),
        }
    }

    /// Largest net acceleration norm the rotors can produce, gravity
    /// included (upper bound used for lower-bound checks).
    pub fn max_net_acceleration(&self) -> f64 {
        4.0 * self.thrust_max / self.mass + self.gravity
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub position: [f64; 3],
    /// Unit quaternion, scalar first.
    pub orientation: [f64; 4],
    pub velocity: [f64; 3],
    pub body_rate: [f64; 3],
}

impl Default for QuadState {
    fn default() -> Self {
        Self::hover_at([0.0; 3])
    }
}

impl QuadState {
    pub fn hover_at(position: [f64; 3]) -> Self {
        Self {
            position,
            orientation: [1.0, 0.0, 0.0, 0.0],
            velocity: [0.0; 3],
            body_rate: [0.0; 3],
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut x = [0.0; STATE_DIM];
        x[0..3].copy_from_slice(&self.position);
        x[3..7].copy_from_slice(&self.orientation);
        x[7..10].copy_from_slice(&self.velocity);
        x[10..13].copy_from_slice(&self.body_rate);
        x
    }

    pub fn from_slice(x: &[f64]) -> Self {
        assert!(x.len() >= STATE_DIM);
        Self {
            position: [x[0], x[1], x[2]],
            orientation: [x[3], x[4], x[5], x[6]],
            velocity: [x[7], x[8], x[9]],
            body_rate: [x[10], x[11], x[12]],
        }
    }

    pub fn normalized(mut self) -> Self {
        let n = norm4(&self.orientation);
        if n > 0.0 {
            self.orientation.iter_mut().for_each(|c| *c /= n);
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotorThrusts(pub [f64; 4]);

impl RotorThrusts {
    pub fn within(&self, cfg: &QuadConfig, tol: f64) -> bool {
        self.0
            .iter()
            .all(|&t| t >= cfg.thrust_min - tol && t <= cfg.thrust_max + tol)
    }
}

/// Equal thrusts balancing gravity, clamped into the rotor limits.
pub fn hover_thrusts(cfg: &QuadConfig) -> Result<RotorThrusts, ConfigError> {
    let t = cfg.mass * cfg.gravity / 4.0;
    if t > cfg.thrust_max {
        return Err(ConfigError::HoverInfeasible {
            weight: cfg.mass * cfg.gravity,
            max_total: 4.0 * cfg.thrust_max,
        });
    }
    Ok(RotorThrusts([t.max(cfg.thrust_min); 4]))
}

/// Collective thrust and body torque from the four rotor thrusts.
pub fn mix<S: Scalar>(u: &[S; 4], cfg: &QuadConfig) -> (S, [S; 3]) {
    let [t1, t2, t3, t4] = *u;
    let k = cfg.arm_length / std::f64::consts::SQRT_2;
    let collective = t1 + t2 + t3 + t4;
    let torque = [
        (t1 + t2 - t3 - t4) * k,
        (t2 + t3 - t1 - t4) * k,
        (t1 - t2 + t3 - t4) * cfg.torque_constant,
    ];
    (collective, torque)
}

pub fn input_to_wrench(u: &RotorThrusts, cfg: &QuadConfig) -> (f64, [f64; 3]) {
    mix(&u.0, cfg)
}

/// Hamilton product, scalar first.
pub fn quat_multiply<S: Scalar>(a: &[S; 4], b: &[S; 4]) -> [S; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// `q (x) [0; v] (x) q*`, valid for unit `q`.
pub fn rotate_vector<S: Scalar>(q: &[S; 4], v: &[S; 3]) -> [S; 3] {
    let [w, x, y, z] = *q;
    // v + 2 w (r x v) + 2 r x (r x v), r = (x, y, z)
    let t = [
        (y * v[2] - z * v[1]) * 2.0,
        (z * v[0] - x * v[2]) * 2.0,
        (x * v[1] - y * v[0]) * 2.0,
    ];
    [
        v[0] + w * t[0] + (y * t[2] - z * t[1]),
        v[1] + w * t[1] + (z * t[0] - x * t[2]),
        v[2] + w * t[2] + (x * t[1] - y * t[0]),
    ]
}

pub fn quat_conjugate(q: &[f64; 4]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Unit quaternion for a rotation of `angle` about `axis`.
pub fn quat_from_axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if n == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s, c) = (0.5 * angle).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

fn norm4(q: &[f64; 4]) -> f64 {
    q.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Time derivative of the state for drag coefficient `drag`.
pub fn dynamics<S: Scalar>(x: &[S; STATE_DIM], u: &[S; 4], cfg: &QuadConfig, drag: f64) -> [S; STATE_DIM] {
    let q = [x[3], x[4], x[5], x[6]];
    let v = [x[7], x[8], x[9]];
    let w = [x[10], x[11], x[12]];
    let (thrust, tau) = mix(u, cfg);

    let qd = quat_multiply(&q, &[S::zero(), w[0], w[1], w[2]]);
    let zero = S::zero();
    let acc = rotate_vector(&q, &[zero, zero, thrust / cfg.mass]);
    let j = cfg.inertia;
    let jw = [w[0] * j[0], w[1] * j[1], w[2] * j[2]];
    let gyro = [
        w[1] * jw[2] - w[2] * jw[1],
        w[2] * jw[0] - w[0] * jw[2],
        w[0] * jw[1] - w[1] * jw[0],
    ];

    [
        v[0],
        v[1],
        v[2],
        qd[0] * 0.5,
        qd[1] * 0.5,
        qd[2] * 0.5,
        qd[3] * 0.5,
        acc[0] - v[0] * drag,
        acc[1] - v[1] * drag,
        acc[2] - v[2] * drag - cfg.gravity,
        (tau[0] - gyro[0]) / j[0],
        (tau[1] - gyro[1]) / j[1],
        (tau[2] - gyro[2]) / j[2],
    ]
}

pub fn state_derivative(x: &QuadState, u: &RotorThrusts, cfg: &QuadConfig) -> [f64; STATE_DIM] {
    dynamics(&x.to_array(), &u.0, cfg, cfg.drag())
}

/// One classical Runge-Kutta step of any autonomous system, without
/// renormalization.
pub fn rk4<S: Scalar, const D: usize>(x: &[S; D], dt: S, f: impl Fn(&[S; D]) -> [S; D]) -> [S; D] {
    let axpy = |a: &[S; D], s: S, b: &[S; D]| -> [S; D] { std::array::from_fn(|i| a[i] + s * b[i]) };
    let half = dt * 0.5;
    let k1 = f(x);
    let k2 = f(&axpy(x, half, &k1));
    let k3 = f(&axpy(x, half, &k2));
    let k4 = f(&axpy(x, dt, &k3));
    std::array::from_fn(|i| x[i] + dt * ((k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) / 6.0))
}

/// RK4 step of the quadrotor with the quaternion renormalized afterwards.
pub fn rk4_step(x: &QuadState, u: &RotorThrusts, dt: f64, cfg: &QuadConfig) -> QuadState {
    let drag = cfg.drag();
    let next = rk4(&x.to_array(), dt, |s| dynamics(s, &u.0, cfg, drag));
    QuadState::from_slice(&next).normalized()
}
