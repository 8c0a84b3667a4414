//! Point-mass oracles: closed-form bang-bang timing, the convex point-mass
//! variant of the progress problem, and orientation guesses derived from
//! point-mass accelerations.

use serde::{Deserialize, Serialize};

use crate::quad_model::QuadConfig;
use crate::track::Track;
use crate::transcription::{Allocation, DecisionLayout, Model, NlpProblem, TranscriptionError};

/// Rest-to-rest minimum time `(t_opt, t_switch)` over `distance` with
/// acceleration bounded by `a_max`: full acceleration for half the time,
/// full deceleration for the rest.
pub fn bangbang_1d(distance: f64, a_max: f64) -> (f64, f64) {
    assert!(distance >= 0.0 && a_max > 0.0);
    let t = 2.0 * (distance / a_max).sqrt();
    (t, 0.5 * t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    /// Bound on the acceleration norm, m/s^2.
    pub a_max: f64,
    /// `a_max` includes gravity on top of the rotor thrust.
    pub include_gravity_margin: bool,
}

impl PointMassConfig {
    /// Thrust-only bound `4 T_max / m`, or `4 T_max / m + g` with the
    /// gravity margin.
    pub fn from_quad(cfg: &QuadConfig, include_gravity_margin: bool) -> Self {
        let mut a_max = 4.0 * cfg.thrust_max / cfg.mass;
        if include_gravity_margin {
            a_max += cfg.gravity;
        }
        Self {
            a_max,
            include_gravity_margin,
        }
    }
}

/// The progress problem with double-integrator dynamics `p'' = a`,
/// `|a| <= a_max`.
pub fn pointmass_problem(track: &Track, pm: &PointMassConfig, nodes: usize) -> Result<NlpProblem, TranscriptionError> {
    NlpProblem::new(track, Model::PointMass { a_max: pm.a_max }, nodes, Allocation::Progress)
}

/// Point-mass solution sliced per node.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMassSolution {
    pub total_time: f64,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    /// Acceleration on each interval.
    pub accelerations: Vec<[f64; 3]>,
    pub progress: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

pub fn extract_pointmass(z: &[f64], layout: &DecisionLayout) -> Result<PointMassSolution, TranscriptionError> {
    if z.len() != layout.len() || layout.nx != 6 || layout.nu != 3 {
        return Err(TranscriptionError::Dimension(
            "decision vector does not match a point-mass layout".into(),
        ));
    }
    let v3 = |s: &[f64]| [s[0], s[1], s[2]];
    let n = layout.nodes;
    Ok(PointMassSolution {
        total_time: z[0],
        positions: (0..=n).map(|k| v3(&z[layout.state(k)])).collect(),
        velocities: (0..=n).map(|k| v3(&z[layout.state(k)][3..])).collect(),
        accelerations: (0..n).map(|k| v3(&z[layout.input(k)])).collect(),
        progress: (0..=n).map(|k| z[layout.lambda(k)].to_vec()).collect(),
        mu: (0..n).map(|k| z[layout.mu(k)].to_vec()).collect(),
        nu: (0..n).map(|k| z[layout.slack(k)].to_vec()).collect(),
    })
}

/// Per node, the smallest rotation taking body z onto the thrust direction
/// `a - g` needed to fly acceleration `a`. Yaw is left at zero.
pub fn orientation_guess_from_accel(accel: &[[f64; 3]], cfg: &QuadConfig) -> Vec<[f64; 4]> {
    accel
        .iter()
        .map(|a| {
            let d = [a[0], a[1], a[2] + cfg.gravity];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if n < 1e-9 {
                return [1.0, 0.0, 0.0, 0.0];
            }
            let d = [d[0] / n, d[1] / n, d[2] / n];
            // z x d = (-d_y, d_x, 0), half-angle construction
            let w = 1.0 + d[2];
            if w < 1e-12 {
                return [0.0, 1.0, 0.0, 0.0];
            }
            let q = [w, -d[1], d[0], 0.0];
            let qn = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            q.map(|c| c / qn)
        })
        .collect()
}
