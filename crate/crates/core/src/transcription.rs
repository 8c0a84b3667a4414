//! Multiple-shooting transcription with complementary progress constraints.
//!
//! Decision vector, node by node:
//!
//! ```text
//! z = [t_N, x_0, u_0, lam_0, mu_0, nu_0, ..., x_{N-1}, u_{N-1}, lam_{N-1}, mu_{N-1}, nu_{N-1}, x_N, lam_N]
//! ```
//!
//! Constraint rows, equalities first:
//!
//! * shooting `x_{k+1} - F(x_k, u_k, t_N / N) = 0` and progress evolution
//!   `lam_{k+1} - lam_k + mu_k = 0` for every interval;
//! * relaxed complementarity `+-mu_k^j (|p_k - p_wj|^2 - nu_k^j) - sigma / N <= 0`,
//!   ordering `lam_k^j - lam_k^{j+1} <= 0` and, for the point mass, the
//!   acceleration ball `|a_k|^2 - a_max^2 <= 0`.
//!
//! Initial state, progress boundaries and terminal conditions are imposed
//! as fixed variable bounds, which the solver removes from the Newton
//! system.

use std::ops::Range;

use cpc_nlp::ad::{self, Scalar};
use cpc_nlp::{Nlp, Relaxable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad_model::{self, ConfigError, QuadConfig, QuadState, RotorThrusts};
use crate::track::{dist, Terminal, Track, TrackError};

/// Lower bound on the trajectory time.
pub const T_MIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptionError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Track(#[from] TrackError),
}

/// Index map of the decision vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLayout {
    pub nodes: usize,
    /// Number of progress variables per node (waypoints, or zero for the
    /// fixed-allocation baseline).
    pub progress: usize,
    pub nx: usize,
    pub nu: usize,
}

impl DecisionLayout {
    pub fn new(nodes: usize, progress: usize, nx: usize, nu: usize) -> Self {
        Self {
            nodes,
            progress,
            nx,
            nu,
        }
    }

    fn width(&self) -> usize {
        self.nx + self.nu + 3 * self.progress
    }

    fn base(&self, k: usize) -> usize {
        assert!(k <= self.nodes, "node {k} out of range");
        1 + k * self.width()
    }

    pub fn len(&self) -> usize {
        self.base(self.nodes) + self.nx + self.progress
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_index(&self) -> usize {
        0
    }

    pub fn state(&self, k: usize) -> Range<usize> {
        let b = self.base(k);
        b..b + self.nx
    }

    pub fn input(&self, k: usize) -> Range<usize> {
        assert!(k < self.nodes);
        let b = self.base(k) + self.nx;
        b..b + self.nu
    }

    pub fn lambda(&self, k: usize) -> Range<usize> {
        let b = if k == self.nodes {
            self.base(k) + self.nx
        } else {
            self.base(k) + self.nx + self.nu
        };
        b..b + self.progress
    }

    pub fn mu(&self, k: usize) -> Range<usize> {
        assert!(k < self.nodes);
        let b = self.base(k) + self.nx + self.nu + self.progress;
        b..b + self.progress
    }

    pub fn slack(&self, k: usize) -> Range<usize> {
        assert!(k < self.nodes);
        let b = self.base(k) + self.nx + self.nu + 2 * self.progress;
        b..b + self.progress
    }

    /// Node owning variable `i`, `None` for `t_N`.
    pub fn stage_of(&self, i: usize) -> Option<usize> {
        if i == 0 {
            None
        } else {
            Some(((i - 1) / self.width()).min(self.nodes))
        }
    }

    /// Switch node of waypoint `j` (0-based) for equally distributed
    /// progress, `N (j + 1) / M`.
    pub fn switch_node(&self, j: usize) -> usize {
        self.nodes * (j + 1) / self.progress.max(1)
    }
}

/// Vehicle model used by the shooting constraints.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Quad(QuadConfig),
    /// Double integrator `p'' = a` with `|a| <= a_max`.
    PointMass {
        a_max: f64,
    },
}

impl Model {
    pub fn nx(&self) -> usize {
        match self {
            Model::Quad(_) => quad_model::STATE_DIM,
            Model::PointMass { .. } => 6,
        }
    }

    pub fn nu(&self) -> usize {
        match self {
            Model::Quad(_) => quad_model::INPUT_DIM,
            Model::PointMass { .. } => 3,
        }
    }
}

/// How waypoints are attached to the time grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Allocation {
    /// Complementary progress constraints: the solver picks the nodes.
    Progress,
    /// Waypoint `j` must be within `tau[j]` of the position at `nodes[j]`.
    Fixed { nodes: Vec<usize>, tau: Vec<f64> },
}

/// Assembled sparse NLP for one track, model and node count.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub layout: DecisionLayout,
    pub model: Model,
    pub track: Track,
    pub allocation: Allocation,
    /// Let the solver iterate on positions and velocities divided by the
    /// track's bounding-box diagonal, thrusts by `thrust_max` and `t_N` by
    /// its starting value. Off by default: it costs convergence on several
    /// presets.
    pub scale_variables: bool,
    sigma: f64,
    drag: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Nonzero `(row, col)` of dF/ds with `s = [x, u, t_N]`.
    shoot_jac: Vec<(usize, usize)>,
    /// Nonzero lower-triangular `(a, b)` of the shooting Hessians.
    shoot_hess: Vec<(usize, usize)>,
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
    m_eq: usize,
    m_in: usize,
}

const QUAD_BLOCK: usize = 18;
const POINT_MASS_BLOCK: usize = 10;

/// CPC problem for the quadrotor.
pub fn assemble(track: &Track, cfg: &QuadConfig, nodes: usize) -> Result<NlpProblem, TranscriptionError> {
    cfg.validate()?;
    quad_model::hover_thrusts(cfg)?;
    NlpProblem::new(track, Model::Quad(cfg.clone()), nodes, Allocation::Progress)
}

/// Baseline with waypoint `j` pinned near node `nodes[j]`.
pub fn assemble_fixed_allocation(
    track: &Track,
    cfg: &QuadConfig,
    nodes: usize,
    waypoint_nodes: &[usize],
    tau: &[f64],
) -> Result<NlpProblem, TranscriptionError> {
    cfg.validate()?;
    quad_model::hover_thrusts(cfg)?;
    NlpProblem::new(
        track,
        Model::Quad(cfg.clone()),
        nodes,
        Allocation::Fixed {
            nodes: waypoint_nodes.to_vec(),
            tau: tau.to_vec(),
        },
    )
}

/// Equally spaced node assignment `k_j = N (j + 1) / M`.
pub fn equal_allocation(nodes: usize, waypoints: usize) -> Vec<usize> {
    (1..=waypoints).map(|j| nodes * j / waypoints).collect()
}

impl NlpProblem {
    pub fn new(track: &Track, model: Model, nodes: usize, allocation: Allocation) -> Result<Self, TranscriptionError> {
        track.validate()?;
        let m = track.num_waypoints();
        let progress = match &allocation {
            Allocation::Progress => {
                if nodes < 2 * m {
                    return Err(TranscriptionError::Dimension(format!(
                        "need at least two nodes per waypoint: N = {nodes}, M = {m}"
                    )));
                }
                m
            }
            Allocation::Fixed { nodes: kj, tau } => {
                if kj.len() != m || tau.len() != m {
                    return Err(TranscriptionError::Dimension(format!(
                        "fixed allocation needs {m} nodes and tolerances, got {} and {}",
                        kj.len(),
                        tau.len()
                    )));
                }
                if kj.windows(2).any(|w| w[0] >= w[1]) || kj.iter().any(|&k| k < 1 || k > nodes) {
                    return Err(TranscriptionError::Dimension(format!(
                        "allocation nodes must be strictly increasing within [1, {nodes}]: {kj:?}"
                    )));
                }
                if tau.iter().any(|&t| !(t > 0.0)) {
                    return Err(TranscriptionError::Dimension("tolerances must be positive".into()));
                }
                0
            }
        };
        if nodes < 2 {
            return Err(TranscriptionError::Dimension(format!("need N >= 2, got {nodes}")));
        }
        if let Model::PointMass { a_max } = model {
            if !(a_max > 0.0) {
                return Err(TranscriptionError::Dimension(format!(
                    "a_max must be positive, got {a_max}"
                )));
            }
        }
        let layout = DecisionLayout::new(nodes, progress, model.nx(), model.nu());
        let drag = match &model {
            Model::Quad(cfg) => cfg.drag(),
            Model::PointMass { .. } => 0.0,
        };
        let mut p = NlpProblem {
            layout,
            model,
            track: track.clone(),
            allocation,
            scale_variables: false,
            sigma: 1.0,
            drag,
            lower: Vec::new(),
            upper: Vec::new(),
            shoot_jac: Vec::new(),
            shoot_hess: Vec::new(),
            jac_structure: Vec::new(),
            hess_structure: Vec::new(),
            m_eq: 0,
            m_in: 0,
        };
        p.build_bounds();
        p.detect_block_patterns();
        p.build_structures();
        Ok(p)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Bound on each complementarity product, `sigma / N`, so that the
    /// relaxation summed over the nodes is `sigma` whatever the
    /// discretization.
    pub fn node_relaxation(&self) -> f64 {
        self.sigma / self.layout.nodes as f64
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Clamp `z` into the variable bounds.
    pub fn clamp(&self, z: &mut [f64]) {
        for i in 0..z.len() {
            z[i] = z[i].max(self.lower[i]).min(self.upper[i]);
        }
    }

    fn nx(&self) -> usize {
        self.layout.nx
    }

    fn nu(&self) -> usize {
        self.layout.nu
    }

    fn num_progress(&self) -> usize {
        self.layout.progress
    }

    fn block_len(&self) -> usize {
        self.nx() + self.nu() + 1
    }

    // ------------------------------------------------------------ bounds

    fn build_bounds(&mut self) {
        let l = self.layout;
        let n = l.len();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        lo[0] = T_MIN;

        for k in 0..=l.nodes {
            let xs = l.state(k);
            if let Model::Quad(cfg) = &self.model {
                for i in 10..13 {
                    lo[xs.start + i] = -cfg.omega_max;
                    hi[xs.start + i] = cfg.omega_max;
                }
            }
            if k < l.nodes {
                let (umin, umax) = match &self.model {
                    Model::Quad(cfg) => (cfg.thrust_min, cfg.thrust_max),
                    Model::PointMass { .. } => (f64::NEG_INFINITY, f64::INFINITY),
                };
                for i in l.input(k) {
                    lo[i] = umin;
                    hi[i] = umax;
                }
                for i in l.mu(k) {
                    lo[i] = 0.0;
                }
                for i in l.slack(k) {
                    lo[i] = 0.0;
                    hi[i] = self.track.d_tol * self.track.d_tol;
                }
            }
        }

        let fix = |lo: &mut Vec<f64>, hi: &mut Vec<f64>, i: usize, v: f64| {
            lo[i] = v;
            hi[i] = v;
        };
        // initial state
        let x0 = self.model_state(&self.track.x_init);
        for (i, v) in l.state(0).zip(x0) {
            fix(&mut lo, &mut hi, i, v);
        }
        // progress boundaries
        for i in l.lambda(0) {
            fix(&mut lo, &mut hi, i, 1.0);
        }
        for i in l.lambda(l.nodes) {
            fix(&mut lo, &mut hi, i, 0.0);
        }
        // terminal conditions
        let xn = l.state(l.nodes).start;
        match (&self.track.terminal, &self.model) {
            (Terminal::Free, _) => {}
            (Terminal::Hover, Model::Quad(_)) => {
                for i in 4..13 {
                    fix(&mut lo, &mut hi, xn + i, 0.0);
                }
            }
            (Terminal::Hover, Model::PointMass { .. }) => {
                for i in 3..6 {
                    fix(&mut lo, &mut hi, xn + i, 0.0);
                }
            }
            (Terminal::FixedState(s), _) => {
                for (i, v) in self.model_state(s).into_iter().enumerate() {
                    fix(&mut lo, &mut hi, xn + i, v);
                }
            }
        }
        if self.track.terminal_position_is_last_waypoint {
            let w = *self.track.waypoints.last().expect("validated track");
            for i in 0..3 {
                fix(&mut lo, &mut hi, xn + i, w[i]);
            }
        }
        self.lower = lo;
        self.upper = hi;
    }

    /// State vector of the model for a full quadrotor state.
    pub fn model_state(&self, s: &QuadState) -> Vec<f64> {
        match self.model {
            Model::Quad(_) => s.to_array().to_vec(),
            Model::PointMass { .. } => {
                let mut v = s.position.to_vec();
                v.extend_from_slice(&s.velocity);
                v
            }
        }
    }

    // ------------------------------------------------------------ shooting

    /// One shooting interval `F(x, u, t_N / N)`; `s = [x, u, t_N]`.
    fn shoot<S: Scalar>(&self, s: &[S], out: &mut [S]) {
        let nx = self.nx();
        let nu = self.nu();
        let dt = s[nx + nu] / self.layout.nodes as f64;
        match &self.model {
            Model::Quad(cfg) => {
                let x: [S; 13] = std::array::from_fn(|i| s[i]);
                let u: [S; 4] = std::array::from_fn(|i| s[nx + i]);
                let mut next = quad_model::rk4(&x, dt, |y| quad_model::dynamics(y, &u, cfg, self.drag));
                let q2 = next[3] * next[3] + next[4] * next[4] + next[5] * next[5] + next[6] * next[6];
                let qn = q2.sqrt();
                for c in &mut next[3..7] {
                    *c = *c / qn;
                }
                out.copy_from_slice(&next);
            }
            Model::PointMass { .. } => {
                let x: [S; 6] = std::array::from_fn(|i| s[i]);
                let a: [S; 3] = [s[6], s[7], s[8]];
                let next = quad_model::rk4(&x, dt, |y| [y[3], y[4], y[5], a[0], a[1], a[2]]);
                out.copy_from_slice(&next);
            }
        }
    }

    fn block_input(&self, z: &[f64], k: usize) -> Vec<f64> {
        let l = &self.layout;
        let mut s = Vec::with_capacity(self.block_len());
        s.extend_from_slice(&z[l.state(k)]);
        s.extend_from_slice(&z[l.input(k)]);
        s.push(z[0]);
        s
    }

    /// Global index of local shooting input `c` at node `k`.
    fn block_index(&self, k: usize, c: usize) -> usize {
        let (nx, nu) = (self.nx(), self.nu());
        if c < nx {
            self.layout.state(k).start + c
        } else if c < nx + nu {
            self.layout.input(k).start + c - nx
        } else {
            0
        }
    }

    /// Dense `nx x block_len` Jacobian of `F`.
    fn shoot_jacobian(&self, s: &[f64]) -> Vec<f64> {
        match self.model {
            Model::Quad(_) => {
                let s: [f64; QUAD_BLOCK] = s.try_into().expect("quad block");
                ad::jacobian(&s, self.nx(), |v, out| self.shoot(v, out))
            }
            Model::PointMass { .. } => {
                let s: [f64; POINT_MASS_BLOCK] = s.try_into().expect("point-mass block");
                ad::jacobian(&s, self.nx(), |v, out| self.shoot(v, out))
            }
        }
    }

    /// `sum_i w_i d2 F_i`, dense `block_len^2`, row-major.
    fn shoot_hessian(&self, s: &[f64], w: &[f64]) -> Vec<f64> {
        fn flatten<const N: usize>(h: [[f64; N]; N]) -> Vec<f64> {
            h.iter().flat_map(|r| r.iter().copied()).collect()
        }
        match self.model {
            Model::Quad(_) => {
                let s: [f64; QUAD_BLOCK] = s.try_into().expect("quad block");
                flatten(ad::weighted_hessian(&s, w, |v, out| self.shoot(v, out)))
            }
            Model::PointMass { .. } => {
                let s: [f64; POINT_MASS_BLOCK] = s.try_into().expect("point-mass block");
                flatten(ad::weighted_hessian(&s, w, |v, out| self.shoot(v, out)))
            }
        }
    }

    /// Structural nonzeros of the shooting block, found by evaluating at
    /// two generic points.
    fn detect_block_patterns(&mut self) {
        let b = self.block_len();
        let nx = self.nx();
        let mut jac = vec![false; nx * b];
        let mut hess = vec![false; b * b];
        for probe in 0..2 {
            let s: Vec<f64> = (0..b)
                .map(|i| {
                    let v = 0.3 + 0.1 * ((i * 7 + probe * 13) % 11) as f64 + 0.01 * i as f64;
                    if i == b - 1 {
                        1.0 + v
                    } else {
                        v
                    }
                })
                .collect();
            let w: Vec<f64> = (0..nx).map(|i| 1.0 + 0.37 * i as f64 + 0.11 * probe as f64).collect();
            for (flag, v) in jac.iter_mut().zip(self.shoot_jacobian(&s)) {
                *flag |= v != 0.0;
            }
            for (flag, v) in hess.iter_mut().zip(self.shoot_hessian(&s, &w)) {
                *flag |= v != 0.0;
            }
        }
        self.shoot_jac = (0..nx)
            .flat_map(|r| (0..b).map(move |c| (r, c)))
            .filter(|&(r, c)| jac[r * b + c])
            .collect();
        self.shoot_hess = (0..b)
            .flat_map(|a| (0..=a).map(move |c| (a, c)))
            .filter(|&(a, c)| hess[a * b + c])
            .collect();
    }

    // ------------------------------------------------------------ rows

    fn num_sequence_rows(&self) -> usize {
        let m = self.num_progress();
        if m < 2 {
            0
        } else {
            (self.layout.nodes - 1) * (m - 1)
        }
    }

    fn has_acceleration_ball(&self) -> bool {
        matches!(self.model, Model::PointMass { .. })
    }

    /// Row offsets of the inequality blocks: complementarity, sequence,
    /// acceleration ball, fixed allocation.
    fn inequality_offsets(&self) -> [usize; 4] {
        let n = self.layout.nodes;
        let m = self.num_progress();
        let comp = self.m_eq;
        let seq = comp + 2 * m * n;
        let ball = seq + self.num_sequence_rows();
        let fixed = ball + if self.has_acceleration_ball() { n } else { 0 };
        [comp, seq, ball, fixed]
    }

    fn build_structures(&mut self) {
        let l = self.layout;
        let (n, m, nx) = (l.nodes, self.num_progress(), self.nx());
        self.m_eq = n * (nx + m);
        let fixed_rows = match &self.allocation {
            Allocation::Fixed { nodes, .. } => nodes.len(),
            Allocation::Progress => 0,
        };
        self.m_in =
            2 * m * n + self.num_sequence_rows() + if self.has_acceleration_ball() { n } else { 0 } + fixed_rows;

        let mut jac = Vec::new();
        // shooting and progress evolution, interval by interval
        for k in 0..n {
            let row0 = k * (nx + m);
            let mut next = 0;
            for i in 0..nx {
                jac.push((row0 + i, l.state(k + 1).start + i));
                while next < self.shoot_jac.len() && self.shoot_jac[next].0 == i {
                    let c = self.shoot_jac[next].1;
                    jac.push((row0 + i, self.block_index(k, c)));
                    next += 1;
                }
            }
            for j in 0..m {
                let r = row0 + nx + j;
                jac.push((r, l.lambda(k + 1).start + j));
                jac.push((r, l.lambda(k).start + j));
                jac.push((r, l.mu(k).start + j));
            }
        }
        let [comp, seq, ball, fixed] = self.inequality_offsets();
        for k in 0..n {
            let p = l.state(k).start;
            for j in 0..m {
                for sign in 0..2 {
                    let r = comp + 2 * (k * m + j) + sign;
                    for i in 0..3 {
                        jac.push((r, p + i));
                    }
                    jac.push((r, l.mu(k).start + j));
                    jac.push((r, l.slack(k).start + j));
                }
            }
        }
        if m >= 2 {
            for k in 1..n {
                for j in 0..m - 1 {
                    let r = seq + (k - 1) * (m - 1) + j;
                    jac.push((r, l.lambda(k).start + j));
                    jac.push((r, l.lambda(k).start + j + 1));
                }
            }
        }
        if self.has_acceleration_ball() {
            for k in 0..n {
                for i in l.input(k) {
                    jac.push((ball + k, i));
                }
            }
        }
        if let Allocation::Fixed { nodes, .. } = &self.allocation {
            for (j, &kj) in nodes.iter().enumerate() {
                for i in 0..3 {
                    jac.push((fixed + j, l.state(kj).start + i));
                }
            }
        }
        self.jac_structure = jac;

        let mut hess = Vec::new();
        let ordered = |a: usize, b: usize| (a.max(b), a.min(b));
        for k in 0..n {
            for &(a, b) in &self.shoot_hess {
                hess.push(ordered(self.block_index(k, a), self.block_index(k, b)));
            }
            let p = l.state(k).start;
            for j in 0..m {
                let mu = l.mu(k).start + j;
                let nu = l.slack(k).start + j;
                for i in 0..3 {
                    hess.push((p + i, p + i));
                }
                for i in 0..3 {
                    hess.push(ordered(mu, p + i));
                }
                hess.push(ordered(nu, mu));
            }
            if self.has_acceleration_ball() {
                for i in l.input(k) {
                    hess.push((i, i));
                }
            }
        }
        if let Allocation::Fixed { nodes, .. } = &self.allocation {
            for &kj in nodes {
                let p = l.state(kj).start;
                for i in 0..3 {
                    hess.push((p + i, p + i));
                }
            }
        }
        self.hess_structure = hess;
    }

    fn squared_distance(&self, z: &[f64], k: usize, j: usize) -> f64 {
        let p = &z[self.layout.state(k).start..][..3];
        let w = self.track.waypoints[j];
        (0..3).map(|i| (p[i] - w[i]).powi(2)).sum()
    }

    /// Split the constraint vector into named residual groups
    /// `(dynamics, progress, complementarity, other inequalities)`.
    pub fn residual_groups(&self, c: &[f64]) -> ResidualGroups {
        let (n, m, nx) = (self.layout.nodes, self.num_progress(), self.nx());
        let mut g = ResidualGroups::default();
        for k in 0..n {
            let row0 = k * (nx + m);
            for i in 0..nx {
                g.dynamics = g.dynamics.max(c[row0 + i].abs());
            }
            for j in 0..m {
                g.progress = g.progress.max(c[row0 + nx + j].abs());
            }
        }
        let [comp, seq, _, _] = self.inequality_offsets();
        for v in &c[comp..seq] {
            g.complementarity = g.complementarity.max(v.max(0.0));
        }
        for v in &c[seq..] {
            g.inequality = g.inequality.max(v.max(0.0));
        }
        g
    }
}

/// Largest violation per residual group.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualGroups {
    pub dynamics: f64,
    pub progress: f64,
    pub complementarity: f64,
    pub inequality: f64,
}

impl Nlp for NlpProblem {
    fn num_variables(&self) -> usize {
        self.layout.len()
    }

    fn num_equalities(&self) -> usize {
        self.m_eq
    }

    fn num_inequalities(&self) -> usize {
        self.m_in
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.copy_from_slice(&self.lower);
        upper.copy_from_slice(&self.upper);
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z[0]
    }

    fn objective_gradient(&self, _z: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[0] = 1.0;
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let (n, m, nx) = (l.nodes, self.num_progress(), self.nx());
        let mut f = vec![0.0; nx];
        for k in 0..n {
            let row0 = k * (nx + m);
            self.shoot(&self.block_input(z, k), &mut f);
            let next = &z[l.state(k + 1)];
            for i in 0..nx {
                out[row0 + i] = next[i] - f[i];
            }
            let (lk, lk1, mu) = (l.lambda(k).start, l.lambda(k + 1).start, l.mu(k).start);
            for j in 0..m {
                out[row0 + nx + j] = z[lk1 + j] - z[lk + j] + z[mu + j];
            }
        }
        let [comp, seq, ball, fixed] = self.inequality_offsets();
        for k in 0..n {
            for j in 0..m {
                let prod = z[l.mu(k).start + j] * (self.squared_distance(z, k, j) - z[l.slack(k).start + j]);
                let r = comp + 2 * (k * m + j);
                out[r] = prod - self.node_relaxation();
                out[r + 1] = -prod - self.node_relaxation();
            }
        }
        if m >= 2 {
            for k in 1..n {
                let lk = l.lambda(k).start;
                for j in 0..m - 1 {
                    out[seq + (k - 1) * (m - 1) + j] = z[lk + j] - z[lk + j + 1];
                }
            }
        }
        if let Model::PointMass { a_max } = self.model {
            for k in 0..n {
                let a2: f64 = z[l.input(k)].iter().map(|a| a * a).sum();
                out[ball + k] = a2 - a_max * a_max;
            }
        }
        if let Allocation::Fixed { nodes, tau } = &self.allocation {
            for (j, &kj) in nodes.iter().enumerate() {
                out[fixed + j] = self.squared_distance(z, kj, j) - tau[j] * tau[j];
            }
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_structure.clone()
    }

    fn jacobian_values(&self, z: &[f64], values: &mut [f64]) {
        let l = &self.layout;
        let (n, m, nx) = (l.nodes, self.num_progress(), self.nx());
        let b = self.block_len();
        let mut v = 0;
        let mut put = |x: f64| {
            values[v] = x;
            v += 1;
        };
        for k in 0..n {
            let jac = self.shoot_jacobian(&self.block_input(z, k));
            let mut next = 0;
            for i in 0..nx {
                put(1.0);
                while next < self.shoot_jac.len() && self.shoot_jac[next].0 == i {
                    let c = self.shoot_jac[next].1;
                    put(-jac[i * b + c]);
                    next += 1;
                }
            }
            for _ in 0..m {
                put(1.0);
                put(-1.0);
                put(1.0);
            }
        }
        for k in 0..n {
            let p = &z[l.state(k).start..][..3];
            for j in 0..m {
                let w = self.track.waypoints[j];
                let mu = z[l.mu(k).start + j];
                let gap = self.squared_distance(z, k, j) - z[l.slack(k).start + j];
                for sign in [1.0, -1.0] {
                    for i in 0..3 {
                        put(sign * 2.0 * mu * (p[i] - w[i]));
                    }
                    put(sign * gap);
                    put(-sign * mu);
                }
            }
        }
        if m >= 2 {
            for _ in 1..n {
                for _ in 0..m - 1 {
                    put(1.0);
                    put(-1.0);
                }
            }
        }
        if self.has_acceleration_ball() {
            for k in 0..n {
                for i in l.input(k) {
                    put(2.0 * z[i]);
                }
            }
        }
        if let Allocation::Fixed { nodes, .. } = &self.allocation {
            for (j, &kj) in nodes.iter().enumerate() {
                let p = &z[l.state(kj).start..][..3];
                let w = self.track.waypoints[j];
                for i in 0..3 {
                    put(2.0 * (p[i] - w[i]));
                }
            }
        }
        debug_assert_eq!(v, self.jac_structure.len());
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_structure.clone()
    }

    fn hessian_values(&self, z: &[f64], _obj_factor: f64, y: &[f64], values: &mut [f64]) {
        let l = &self.layout;
        let (n, m, nx) = (l.nodes, self.num_progress(), self.nx());
        let b = self.block_len();
        let [comp, _, ball, fixed] = self.inequality_offsets();
        let mut v = 0;
        let mut put = |x: f64| {
            values[v] = x;
            v += 1;
        };
        for k in 0..n {
            let row0 = k * (nx + m);
            // residual is x_{k+1} - F, so the curvature enters negated
            let w: Vec<f64> = y[row0..row0 + nx].iter().map(|y| -y).collect();
            if w.iter().any(|&x| x != 0.0) {
                let h = self.shoot_hessian(&self.block_input(z, k), &w);
                for &(a, c) in &self.shoot_hess {
                    put(h[a * b + c]);
                }
            } else {
                for _ in 0..self.shoot_hess.len() {
                    put(0.0);
                }
            }
            let p = &z[l.state(k).start..][..3];
            for j in 0..m {
                let r = comp + 2 * (k * m + j);
                let wj = y[r] - y[r + 1];
                let mu = z[l.mu(k).start + j];
                let wp = self.track.waypoints[j];
                for _ in 0..3 {
                    put(2.0 * mu * wj);
                }
                for i in 0..3 {
                    put(2.0 * (p[i] - wp[i]) * wj);
                }
                put(-wj);
            }
            if self.has_acceleration_ball() {
                for _ in 0..self.nu() {
                    put(2.0 * y[ball + k]);
                }
            }
        }
        if let Allocation::Fixed { nodes, .. } = &self.allocation {
            for j in 0..nodes.len() {
                for _ in 0..3 {
                    put(2.0 * y[fixed + j]);
                }
            }
        }
        debug_assert_eq!(v, self.hess_structure.len());
    }

    fn variable_stages(&self) -> Option<Vec<Option<usize>>> {
        Some((0..self.layout.len()).map(|i| self.layout.stage_of(i)).collect())
    }

    fn restoration_frozen(&self) -> Vec<usize> {
        vec![0]
    }

    fn variable_scaling(&self, z0: &[f64]) -> Option<Vec<f64>> {
        if !self.scale_variables {
            return None;
        }
        let l = &self.layout;
        let mut lo = self.track.x_init.position;
        let mut hi = lo;
        for w in &self.track.waypoints {
            for i in 0..3 {
                lo[i] = lo[i].min(w[i]);
                hi[i] = hi[i].max(w[i]);
            }
        }
        let diag = (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt().max(1.0);
        let (vel, thrust) = match &self.model {
            Model::Quad(cfg) => (7..10, Some(cfg.thrust_max.max(1.0))),
            Model::PointMass { .. } => (3..6, None),
        };
        let mut d = vec![1.0; l.len()];
        d[0] = z0[0].max(1.0);
        for k in 0..=l.nodes {
            let xs = l.state(k).start;
            for i in (0..3).chain(vel.clone()) {
                d[xs + i] = diag;
            }
            if let (Some(t), true) = (thrust, k < l.nodes) {
                l.input(k).for_each(|i| d[i] = t);
            }
        }
        Some(d)
    }
}

impl Relaxable for NlpProblem {
    fn relaxation(&self) -> f64 {
        self.sigma
    }

    fn set_relaxation(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    fn row_relaxation(&self) -> f64 {
        self.node_relaxation()
    }
}

// ------------------------------------------------------------ trajectories

/// Solution of the quadrotor problem, node by node.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub total_time: f64,
    pub times: Vec<f64>,
    pub states: Vec<QuadState>,
    pub inputs: Vec<RotorThrusts>,
    /// `progress[k][j]` is lambda of waypoint `j` at node `k`.
    pub progress: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn nodes(&self) -> usize {
        self.inputs.len()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.states.iter().map(|s| s.position).collect()
    }
}

fn check_layout(z: &[f64], layout: &DecisionLayout) -> Result<(), TranscriptionError> {
    if z.len() != layout.len() {
        return Err(TranscriptionError::Dimension(format!(
            "decision vector has length {}, layout expects {}",
            z.len(),
            layout.len()
        )));
    }
    Ok(())
}

/// Slice a quadrotor decision vector into a [`Trajectory`].
pub fn extract_trajectory(z: &[f64], layout: &DecisionLayout) -> Result<Trajectory, TranscriptionError> {
    check_layout(z, layout)?;
    if layout.nx != quad_model::STATE_DIM || layout.nu != quad_model::INPUT_DIM {
        return Err(TranscriptionError::Dimension("layout is not a quadrotor layout".into()));
    }
    let n = layout.nodes;
    let t = z[0];
    Ok(Trajectory {
        total_time: t,
        times: (0..=n).map(|k| t * k as f64 / n as f64).collect(),
        states: (0..=n).map(|k| QuadState::from_slice(&z[layout.state(k)])).collect(),
        inputs: (0..n)
            .map(|k| {
                let u = &z[layout.input(k)];
                RotorThrusts([u[0], u[1], u[2], u[3]])
            })
            .collect(),
        progress: (0..=n).map(|k| z[layout.lambda(k)].to_vec()).collect(),
        mu: (0..n).map(|k| z[layout.mu(k)].to_vec()).collect(),
        nu: (0..n).map(|k| z[layout.slack(k)].to_vec()).collect(),
    })
}

/// Inverse of [`extract_trajectory`].
pub fn pack_trajectory(traj: &Trajectory, layout: &DecisionLayout) -> Vec<f64> {
    let mut z = vec![0.0; layout.len()];
    z[0] = traj.total_time;
    for k in 0..=layout.nodes {
        z[layout.state(k)].copy_from_slice(&traj.states[k].to_array());
        z[layout.lambda(k)].copy_from_slice(&traj.progress[k]);
        if k < layout.nodes {
            z[layout.input(k)].copy_from_slice(&traj.inputs[k].0);
            z[layout.mu(k)].copy_from_slice(&traj.mu[k]);
            z[layout.slack(k)].copy_from_slice(&traj.nu[k]);
        }
    }
    z
}

/// Result of re-integrating a trajectory's inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayReport {
    pub oversample: usize,
    /// Largest distance between replayed and solution positions at nodes.
    pub max_position_divergence: f64,
    /// Closest replayed approach to each waypoint.
    pub waypoint_min_distance: Vec<f64>,
    /// Largest amount by which any rotor thrust leaves its limits.
    pub max_thrust_violation: f64,
    /// Largest amount by which any replayed body rate exceeds `omega_max`.
    pub max_body_rate_violation: f64,
}

impl ReplayReport {
    pub fn waypoints_passed(&self, d_tol: f64, margin: f64) -> bool {
        self.waypoint_min_distance.iter().all(|&d| d <= d_tol + margin)
    }

    pub fn bounds_respected(&self, tol: f64) -> bool {
        self.max_thrust_violation <= tol && self.max_body_rate_violation <= tol
    }

    pub fn passed(&self, d_tol: f64, margin: f64, tol: f64) -> bool {
        self.waypoints_passed(d_tol, margin) && self.bounds_respected(tol)
    }
}

/// Re-integrate the trajectory's inputs from its first state with RK4 at
/// `dt / oversample`.
pub fn replay_check(traj: &Trajectory, cfg: &QuadConfig, waypoints: &[[f64; 3]], oversample: usize) -> ReplayReport {
    let oversample = oversample.max(1);
    let n = traj.nodes();
    let h = traj.total_time / n as f64 / oversample as f64;
    let mut x = traj.states[0];
    let mut min_dist: Vec<f64> = waypoints.iter().map(|w| dist(&x.position, w)).collect();
    let mut divergence: f64 = 0.0;
    let mut rate_violation: f64 = 0.0;
    let mut thrust_violation: f64 = 0.0;
    let rate_excess = |s: &QuadState| s.body_rate.iter().fold(0.0f64, |a, w| a.max(w.abs() - cfg.omega_max));
    rate_violation = rate_violation.max(rate_excess(&x));
    for k in 0..n {
        let u = traj.inputs[k];
        for &t in &u.0 {
            thrust_violation = thrust_violation.max(t - cfg.thrust_max).max(cfg.thrust_min - t);
        }
        for _ in 0..oversample {
            x = quad_model::rk4_step(&x, &u, h, cfg);
            for (d, w) in min_dist.iter_mut().zip(waypoints) {
                *d = d.min(dist(&x.position, w));
            }
            rate_violation = rate_violation.max(rate_excess(&x));
        }
        divergence = divergence.max(dist(&x.position, &traj.states[k + 1].position));
    }
    ReplayReport {
        oversample,
        max_position_divergence: divergence,
        waypoint_min_distance: min_dist,
        max_thrust_violation: thrust_violation.max(0.0),
        max_body_rate_violation: rate_violation.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_ranges_partition_the_vector() {
        let l = DecisionLayout::new(7, 3, 13, 4);
        let mut seen = vec![0u8; l.len()];
        seen[l.t_index()] += 1;
        for k in 0..=7 {
            l.state(k).chain(l.lambda(k)).for_each(|i| seen[i] += 1);
            if k < 7 {
                l.input(k).chain(l.mu(k)).chain(l.slack(k)).for_each(|i| seen[i] += 1);
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(l.stage_of(0), None);
        assert_eq!(l.stage_of(l.state(3).start), Some(3));
        assert_eq!(l.stage_of(l.lambda(7).end - 1), Some(7));
    }

    #[test]
    fn rejects_too_few_nodes() {
        let t = Track::new([0.0; 3], vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0.1);
        let err = assemble(&t, &QuadConfig::standard(), 3).unwrap_err();
        assert!(matches!(err, TranscriptionError::Dimension(_)));
    }

    #[test]
    fn rejects_bad_allocation() {
        let t = Track::new([0.0; 3], vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0.1);
        let cfg = QuadConfig::standard();
        assert!(assemble_fixed_allocation(&t, &cfg, 10, &[5, 5], &[0.1, 0.1]).is_err());
        assert!(assemble_fixed_allocation(&t, &cfg, 10, &[5, 11], &[0.1, 0.1]).is_err());
        assert!(assemble_fixed_allocation(&t, &cfg, 10, &[5], &[0.1]).is_err());
        assert!(assemble_fixed_allocation(&t, &cfg, 10, &[5, 10], &[0.1, 0.1]).is_ok());
    }
}
