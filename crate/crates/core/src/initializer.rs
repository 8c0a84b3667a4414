//! Initial guesses for the quadrotor problem.

use cpc_nlp::homotopy::{homotopy_solve, SolverConfig};
use cpc_nlp::{SolveStatus, SolverReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointmass::{extract_pointmass, orientation_guess_from_accel, pointmass_problem, PointMassConfig};
use crate::quad_model::{self, quat_conjugate, quat_from_axis_angle, quat_multiply, ConfigError, QuadConfig};
use crate::track::{dist, Track};
use crate::transcription::{DecisionLayout, TranscriptionError, T_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessKind {
    Default,
    /// Positions on the straight line from the start to the last waypoint.
    Direct,
    PointMass,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialGuess {
    pub z0: Vec<f64>,
    pub layout: DecisionLayout,
    pub kind: GuessKind,
}

#[derive(Debug, Error)]
pub enum GuessError {
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("point-mass solve ended with {0:?}")]
    PointMass(SolveStatus),
}

fn quad_layout(track: &Track, nodes: usize) -> DecisionLayout {
    DecisionLayout::new(
        nodes,
        track.num_waypoints(),
        quad_model::STATE_DIM,
        quad_model::INPUT_DIM,
    )
}

fn lerp(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    [
        a[0] + s * (b[0] - a[0]),
        a[1] + s * (b[1] - a[1]),
        a[2] + s * (b[2] - a[2]),
    ]
}

fn unit(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    let d = dist(a, b);
    if d < 1e-12 {
        [0.0; 3]
    } else {
        [(b[0] - a[0]) / d, (b[1] - a[1]) / d, (b[2] - a[2]) / d]
    }
}

/// Identity attitude, zero body rates, hover thrusts, 1 m/s along the
/// polyline through the waypoints, which are reached at the equally spaced
/// switch nodes `k_j = N j / M`. Progress switches at those nodes with a
/// unit decrement on the preceding interval.
pub fn default_guess(track: &Track, cfg: &QuadConfig, nodes: usize) -> Result<InitialGuess, GuessError> {
    let start = track.x_init.position;
    let mut keys = vec![(0usize, start)];
    let layout = quad_layout(track, nodes);
    for (j, w) in track.waypoints.iter().enumerate() {
        keys.push((layout.switch_node(j), *w));
    }
    let hover = quad_model::hover_thrusts(cfg)?;
    let mut g = guess_along(track, hover.0, nodes, &keys)?;
    g.z0[0] = (track.path_length() / 1.0).max(T_MIN);
    Ok(g)
}

/// Positions on the straight segment from the start to the last waypoint;
/// progress and everything else as in [`default_guess`].
pub fn direct_guess(track: &Track, cfg: &QuadConfig, nodes: usize) -> Result<InitialGuess, GuessError> {
    let start = track.x_init.position;
    let end = *track
        .waypoints
        .last()
        .ok_or_else(|| GuessError::Dimension("no waypoints".into()))?;
    let hover = quad_model::hover_thrusts(cfg)?;
    let mut g = guess_along(track, hover.0, nodes, &[(0, start), (nodes, end)])?;
    g.z0[0] = dist(&start, &end).max(T_MIN);
    g.kind = GuessKind::Direct;
    Ok(g)
}

/// Piecewise-linear positions through `(node, position)` keyframes.
fn guess_along(
    track: &Track,
    hover: [f64; 4],
    nodes: usize,
    keys: &[(usize, [f64; 3])],
) -> Result<InitialGuess, GuessError> {
    track.validate().map_err(TranscriptionError::from)?;
    let layout = quad_layout(track, nodes);
    let m = track.num_waypoints();
    if nodes < 2 * m {
        return Err(GuessError::Dimension(format!("need N >= 2M, got N = {nodes}, M = {m}")));
    }
    let mut z = vec![0.0; layout.len()];

    for seg in keys.windows(2) {
        let ((k0, a), (k1, b)) = (seg[0], seg[1]);
        let dir = unit(&a, &b);
        let last = if k1 == nodes { k1 } else { k1 - 1 };
        for k in k0..=last {
            let s = if k1 > k0 {
                (k - k0) as f64 / (k1 - k0) as f64
            } else {
                0.0
            };
            let x = &mut z[layout.state(k)];
            x[0..3].copy_from_slice(&lerp(&a, &b, s));
            x[3] = 1.0;
            x[7..10].copy_from_slice(&dir);
        }
    }
    for k in 0..=nodes {
        let lam = layout.lambda(k).start;
        for j in 0..m {
            z[lam + j] = if k < layout.switch_node(j) { 1.0 } else { 0.0 };
        }
        if k < nodes {
            z[layout.input(k)].copy_from_slice(&hover);
            let mu = layout.mu(k).start;
            for j in 0..m {
                if k + 1 == layout.switch_node(j) {
                    z[mu + j] = 1.0;
                }
            }
            let nu = layout.slack(k).start;
            z[nu..nu + m]
                .iter_mut()
                .for_each(|v| *v = 0.5 * track.d_tol * track.d_tol);
        }
    }
    z[layout.state(0)].copy_from_slice(&track.x_init.to_array());
    Ok(InitialGuess {
        z0: z,
        layout,
        kind: GuessKind::Default,
    })
}

/// Spherical interpolation without flipping `b` onto `a`'s hemisphere, so
/// keyframes given as multiple turns keep their sense of rotation.
fn slerp(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    let dot: f64 = (0..4).map(|i| a[i] * b[i]).sum::<f64>().clamp(-1.0, 1.0);
    let theta = dot.acos();
    if theta.abs() < 1e-12 {
        return *a;
    }
    let (wa, wb) = (((1.0 - s) * theta).sin() / theta.sin(), (s * theta).sin() / theta.sin());
    if !wa.is_finite() || !wb.is_finite() {
        // antipodal keyframes: rotate through an orthogonal quaternion
        let mid = [-a[1], a[0], -a[3], a[2]];
        return if s < 0.5 {
            slerp(a, &mid, 2.0 * s)
        } else {
            slerp(&mid, b, 2.0 * s - 1.0)
        };
    }
    std::array::from_fn(|i| wa * a[i] + wb * b[i])
}

/// Replace the orientations of `base` by an interpolation between
/// keyframes at the start and at every switch node. `angles[0]` belongs to
/// the start, `angles[j + 1]` to waypoint `j`.
pub fn custom_orientation_guess(base: &InitialGuess, angles: &[([f64; 3], f64)]) -> Result<InitialGuess, GuessError> {
    let l = base.layout;
    if angles.len() != l.progress + 1 {
        return Err(GuessError::Dimension(format!(
            "need {} keyframe angles, got {}",
            l.progress + 1,
            angles.len()
        )));
    }
    let mut keys: Vec<(usize, [f64; 4])> = vec![(0, quat_from_axis_angle(angles[0].0, angles[0].1))];
    for (j, &(axis, angle)) in angles[1..].iter().enumerate() {
        keys.push((l.switch_node(j), quat_from_axis_angle(axis, angle)));
    }
    let mut z = base.z0.clone();
    for seg in keys.windows(2) {
        let ((k0, a), (k1, b)) = (seg[0], seg[1]);
        for k in k0..=k1 {
            let s = if k1 > k0 {
                (k - k0) as f64 / (k1 - k0) as f64
            } else {
                1.0
            };
            let q = if k == k1 { b } else { slerp(&a, &b, s) };
            z[l.state(k)][3..7].copy_from_slice(&q);
        }
    }
    // the initial state is fixed by the problem
    z[l.state(0)].copy_from_slice(&base.z0[l.state(0)]);
    Ok(InitialGuess {
        z0: z,
        layout: l,
        kind: GuessKind::Custom,
    })
}

/// Body rate that rotates `a` into `b` within `dt`.
fn rate_between(a: &[f64; 4], b: &[f64; 4], dt: f64) -> [f64; 3] {
    let mut d = quat_multiply(&quat_conjugate(a), b);
    if d[0] < 0.0 {
        d = d.map(|c| -c);
    }
    let vn = (d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt();
    if vn < 1e-15 || dt <= 0.0 {
        return [0.0; 3];
    }
    let angle = 2.0 * vn.atan2(d[0]);
    [d[1] / vn * angle / dt, d[2] / vn * angle / dt, d[3] / vn * angle / dt]
}

/// Tightest relaxation the point-mass warm start is solved to.
pub const GUESS_SIGMA: f64 = 1e-3;

/// Solve the point-mass problem (thrust-only acceleration bound) and take
/// positions, velocities, time and progress from it, attitudes from its
/// accelerations and body rates from differencing those attitudes.
pub fn pointmass_guess(
    track: &Track,
    cfg: &QuadConfig,
    nodes: usize,
    solver: &SolverConfig,
) -> Result<(InitialGuess, SolverReport), GuessError> {
    let pm = PointMassConfig::from_quad(cfg, false);
    let mut problem = pointmass_problem(track, &pm, nodes)?;
    let pm_guess = pointmass_default_guess(track, nodes, &problem);
    // a warm start does not need the tight stages, which stall on
    // millimeter tolerances
    let mut solver = solver.clone();
    let keep = solver
        .homotopy_schedule
        .iter()
        .take_while(|&&s| s >= GUESS_SIGMA * (1.0 - 1e-9))
        .count()
        .max(1);
    solver.homotopy_schedule.truncate(keep);
    let (sol, report) =
        homotopy_solve(&mut problem, &pm_guess, &solver).map_err(|e| GuessError::Dimension(e.to_string()))?;
    if report.status != SolveStatus::Converged {
        return Err(GuessError::PointMass(report.status));
    }
    let pms = extract_pointmass(&sol.z, &problem.layout)?;

    let base = default_guess(track, cfg, nodes)?;
    let l = base.layout;
    let mut z = base.z0;
    z[0] = pms.total_time;
    let mut accel = pms.accelerations.clone();
    accel.push(*pms.accelerations.last().expect("at least one interval"));
    let mut quats = orientation_guess_from_accel(&accel, cfg);
    quats[0] = track.x_init.orientation;
    let dt = pms.total_time / nodes as f64;
    for k in 0..=nodes {
        let x = &mut z[l.state(k)];
        x[0..3].copy_from_slice(&pms.positions[k]);
        x[3..7].copy_from_slice(&quats[k]);
        x[7..10].copy_from_slice(&pms.velocities[k]);
        let w = if k < nodes {
            rate_between(&quats[k], &quats[k + 1], dt)
        } else {
            [0.0; 3]
        };
        x[10..13].copy_from_slice(&w.map(|c| c.clamp(-cfg.omega_max, cfg.omega_max)));
        z[l.lambda(k)].copy_from_slice(&pms.progress[k]);
        if k < nodes {
            z[l.mu(k)].copy_from_slice(&pms.mu[k]);
            z[l.slack(k)].copy_from_slice(&pms.nu[k]);
        }
    }
    z[l.state(0)].copy_from_slice(&track.x_init.to_array());
    Ok((
        InitialGuess {
            z0: z,
            layout: l,
            kind: GuessKind::PointMass,
        },
        report,
    ))
}

/// Default guess mapped onto a point-mass layout: positions and velocities
/// from the polyline, zero acceleration.
pub fn pointmass_default_guess(track: &Track, nodes: usize, problem: &crate::transcription::NlpProblem) -> Vec<f64> {
    let ql = quad_layout(track, nodes);
    let mut keys = vec![(0usize, track.x_init.position)];
    for (j, w) in track.waypoints.iter().enumerate() {
        keys.push((ql.switch_node(j), *w));
    }
    let mut qz = guess_along(track, [0.0; 4], nodes, &keys).expect("validated track").z0;
    qz[0] = track.path_length().max(T_MIN);
    let l = problem.layout;
    let mut z = vec![0.0; l.len()];
    z[0] = qz[0];
    for k in 0..=nodes {
        let x = &qz[ql.state(k)];
        let y = &mut z[l.state(k)];
        y[0..3].copy_from_slice(&x[0..3]);
        y[3..6].copy_from_slice(&x[7..10]);
        z[l.lambda(k)].copy_from_slice(&qz[ql.lambda(k)]);
        if k < nodes {
            z[l.mu(k)].copy_from_slice(&qz[ql.mu(k)]);
            z[l.slack(k)].copy_from_slice(&qz[ql.slack(k)]);
        }
    }
    z[l.state(0)].copy_from_slice(&problem.model_state(&track.x_init));
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slerp_hits_endpoints() {
        let a = quat_from_axis_angle([0.0, 1.0, 0.0], 0.0);
        let b = quat_from_axis_angle([0.0, 1.0, 0.0], std::f64::consts::PI);
        let m = slerp(&a, &b, 0.5);
        let expect = quat_from_axis_angle([0.0, 1.0, 0.0], std::f64::consts::FRAC_PI_2);
        for i in 0..4 {
            assert!((m[i] - expect[i]).abs() < 1e-12);
        }
        assert_eq!(slerp(&a, &b, 0.0), a);
    }

    #[test]
    fn rate_between_recovers_constant_rotation() {
        let a = quat_from_axis_angle([1.0, 2.0, 0.5], 0.3);
        let w: [f64; 3] = [0.4, -1.0, 2.0];
        let dt = 0.05;
        let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        let step = quat_from_axis_angle(w, wn * dt);
        let b = quat_multiply(&a, &step);
        let r = rate_between(&a, &b, dt);
        for i in 0..3 {
            assert!((r[i] - w[i]).abs() < 1e-10);
        }
    }
}
