//! Primal-dual interior-point method with a filter line search.
//!
//! Inequalities are turned into equalities with non-negative slacks,
//! variable and slack bounds are handled by a logarithmic barrier, and the
//! barrier parameter follows the monotone Fiacco-McCormick rule. Each
//! Newton step solves the reduced primal-dual system
//!
//! ```text
//! [ W + Sigma_x + dw I   J_E^T          J_I^T            ] [dx  ]
//! [ J_E                  -dc I          0                ] [dy_E]
//! [ J_I                  0              -Sigma_s^-1 - dc ] [dy_I]
//! ```
//!
//! with a sparse LDL^T factorization whose pivot signs drive the inertia
//! correction. When the filter line search cannot find an acceptable step
//! the solver switches to a feasibility restoration phase.

use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::check::kkt_breakdown;
use crate::ldl::{LdlFactor, SymbolicLdl};
use crate::problem::{Multipliers, Nlp};
use crate::restoration::RestorationNlp;
use crate::scaling::Scaled;

/// Solver settings. Tolerances are absolute, measured in the problem's own
/// units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    pub constraint_tolerance: f64,
    /// Barrier parameter for a cold start.
    pub mu_init: f64,
    /// Barrier parameter used when primal and dual values are supplied.
    pub warm_mu_init: f64,
    /// Armijo sufficient-decrease coefficient.
    pub armijo: f64,
    /// Step reduction factor of the backtracking line search.
    pub backtrack: f64,
    /// Relative push of the initial point into the interior of its bounds.
    pub bound_push: f64,
    pub warm_bound_push: f64,
    /// Maximum number of second-order corrections per iteration.
    pub max_soc: usize,
    pub max_restoration_iterations: usize,
    pub restoration_enabled: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-6,
            mu_init: 0.1,
            warm_mu_init: 1e-4,
            armijo: 1e-4,
            backtrack: 0.5,
            bound_push: 1e-2,
            warm_bound_push: 1e-6,
            max_soc: 4,
            max_restoration_iterations: 200,
            restoration_enabled: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
    Diverged,
}

/// One line of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub sigma: f64,
    pub iteration: usize,
    pub objective: f64,
    pub constraint_violation: f64,
    pub kkt_residual: f64,
    pub barrier: f64,
    pub step: f64,
    pub regularization: f64,
    pub restoration: bool,
}

/// Primal point plus multipliers, in full problem numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDual {
    pub z: Vec<f64>,
    pub multipliers: Multipliers,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub solution: PrimalDual,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub complementarity: f64,
    pub objective: f64,
    pub wall_time: f64,
    pub log: Vec<IterationRecord>,
}

// filter and line-search constants
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const DELTA_SWITCH: f64 = 1.0;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SOC: f64 = 0.99;
// barrier update
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const KAPPA_SIGMA: f64 = 1e10;
const KAPPA_D: f64 = 1e-5;
const S_MAX: f64 = 100.0;
// inertia correction
const DELTA_W_INIT: f64 = 1e-4;
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;
const DELTA_C_BASE: f64 = 1e-10;

/// Solve `nlp` from `z0`, optionally warm-starting the multipliers.
///
/// `sigma` is only recorded in the iteration log.
pub fn solve<P: Nlp + ?Sized>(
    nlp: &P,
    z0: &[f64],
    warm: Option<&Multipliers>,
    opts: &SolverOptions,
    sigma: f64,
) -> SolveOutcome {
    let start = Instant::now();
    let Some(d) = nlp.variable_scaling(z0).filter(|d| d.iter().any(|&v| v != 1.0)) else {
        let mut ip = Interior::new(nlp, opts, sigma);
        let status = ip.run(z0, warm, None);
        return ip.finish(status, start.elapsed().as_secs_f64());
    };
    let scaled = Scaled::new(nlp, d);
    let warm = warm.map(|m| scaled.scale_multipliers(m));
    let mut ip = Interior::new(&scaled, opts, sigma);
    let status = ip.run(&scaled.scale_point(z0), warm.as_ref(), None);
    let mut out = ip.finish(status, start.elapsed().as_secs_f64());
    out.solution.z = scaled.unscale_point(&out.solution.z);
    scaled.unscale_multipliers(&mut out.solution.multipliers);
    // report the measures of the original problem
    let k = kkt_breakdown(nlp, &out.solution.z, &out.solution.multipliers);
    out.constraint_violation = k.feasibility;
    out.complementarity = k.complementarity.max(k.multiplier_sign);
    out.kkt_residual = k.max();
    out
}

/// Early-exit test used by the restoration phase: receives the full primal
/// point and returns `true` to stop.
pub(crate) type StopTest<'a> = &'a dyn Fn(&[f64]) -> bool;

pub(crate) struct Interior<'a, P: Nlp + ?Sized> {
    nlp: &'a P,
    opts: &'a SolverOptions,
    sigma: f64,
    n_full: usize,
    m_eq: usize,
    m_in: usize,
    /// indices of non-fixed variables
    free: Vec<usize>,
    /// full-size template carrying the fixed values
    z_full: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    // Jacobian entries on free columns: (entry index, row, free col)
    jac_map: Vec<(usize, usize, usize)>,
    jac_nnz: usize,
    // Hessian entries on free pairs: (entry index, free row, free col)
    hess_map: Vec<(usize, usize, usize)>,
    hess_nnz: usize,
    symbolic: SymbolicLdl,
    // iterate
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    v: Vec<f64>,
    mu: f64,
    tau: f64,
    filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    delta_w_last: f64,
    // cached evaluations at the current iterate
    f: f64,
    grad: Vec<f64>,
    cons: Vec<f64>,
    jac: Vec<f64>,
    iterations: usize,
    log: Vec<IterationRecord>,
    in_restoration: bool,
}

struct Step {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
    dv: Vec<f64>,
}

/// Factorized KKT system together with its right-hand-side ingredients.
struct Newton {
    factor: LdlFactor,
    kkt_values: Vec<f64>,
    sigma_s: Vec<f64>,
    delta_w: f64,
}

impl<'a, P: Nlp + ?Sized> Interior<'a, P> {
    pub(crate) fn new(nlp: &'a P, opts: &'a SolverOptions, sigma: f64) -> Self {
        let n_full = nlp.num_variables();
        let m_eq = nlp.num_equalities();
        let m_in = nlp.num_inequalities();
        let m = m_eq + m_in;
        let mut lo = vec![f64::NEG_INFINITY; n_full];
        let mut hi = vec![f64::INFINITY; n_full];
        nlp.variable_bounds(&mut lo, &mut hi);

        let mut free = Vec::new();
        let mut free_of = vec![usize::MAX; n_full];
        let mut z_full = vec![0.0; n_full];
        for i in 0..n_full {
            if lo[i] == hi[i] {
                z_full[i] = lo[i];
            } else {
                free_of[i] = free.len();
                free.push(i);
            }
        }
        let n = free.len();
        let lower: Vec<f64> = free.iter().map(|&i| lo[i]).collect();
        let upper: Vec<f64> = free.iter().map(|&i| hi[i]).collect();

        let jac_struct = nlp.jacobian_structure();
        let jac_map: Vec<(usize, usize, usize)> = jac_struct
            .iter()
            .enumerate()
            .filter(|(_, &(_, c))| free_of[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, r, free_of[c]))
            .collect();
        let hess_struct = nlp.hessian_structure();
        let hess_map: Vec<(usize, usize, usize)> = hess_struct
            .iter()
            .enumerate()
            .filter(|(_, &(r, c))| free_of[r] != usize::MAX && free_of[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, free_of[r], free_of[c]))
            .collect();

        // KKT entries: Hessian, variable diagonal, Jacobian, constraint diagonal
        let mut entries = Vec::with_capacity(hess_map.len() + n + jac_map.len() + m);
        entries.extend(hess_map.iter().map(|&(_, r, c)| (r, c)));
        entries.extend((0..n).map(|i| (i, i)));
        entries.extend(jac_map.iter().map(|&(_, r, c)| (n + r, c)));
        entries.extend((0..m).map(|r| (n + r, n + r)));

        let perm = elimination_order(nlp, &free, n, m, &jac_map);
        let symbolic = SymbolicLdl::new(n + m, &entries, perm);
        debug!(
            "kkt dim {} with {} entries, factor nnz {}",
            n + m,
            entries.len(),
            symbolic.factor_nnz()
        );

        Self {
            nlp,
            opts,
            sigma,
            n_full,
            m_eq,
            m_in,
            free,
            z_full,
            lower,
            upper,
            jac_map,
            jac_nnz: jac_struct.len(),
            hess_map,
            hess_nnz: hess_struct.len(),
            symbolic,
            x: vec![0.0; n],
            s: vec![0.0; m_in],
            y: vec![0.0; m],
            zl: vec![0.0; n],
            zu: vec![0.0; n],
            v: vec![0.0; m_in],
            mu: opts.mu_init,
            tau: TAU_MIN,
            filter: Vec::new(),
            theta_max: f64::INFINITY,
            theta_min: 0.0,
            delta_w_last: 0.0,
            f: 0.0,
            grad: vec![0.0; n],
            cons: vec![0.0; m],
            jac: vec![0.0; jac_struct.len()],
            iterations: 0,
            log: Vec::new(),
            in_restoration: false,
        }
    }

    fn n(&self) -> usize {
        self.free.len()
    }

    fn m(&self) -> usize {
        self.m_eq + self.m_in
    }

    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.z_full.clone();
        for (k, &i) in self.free.iter().enumerate() {
            z[i] = x[k];
        }
        z
    }

    // ---------------------------------------------------------------- setup

    fn initialize(&mut self, z0: &[f64], warm: Option<&Multipliers>) {
        let n = self.n();
        let push = if warm.is_some() {
            self.opts.warm_bound_push
        } else {
            self.opts.bound_push
        };
        for k in 0..n {
            let (l, u) = (self.lower[k], self.upper[k]);
            let mut xk = z0[self.free[k]];
            let pl = if l.is_finite() {
                let mut p = push * l.abs().max(1.0);
                if u.is_finite() {
                    p = p.min(push * (u - l));
                }
                p
            } else {
                0.0
            };
            let pu = if u.is_finite() {
                let mut p = push * u.abs().max(1.0);
                if l.is_finite() {
                    p = p.min(push * (u - l));
                }
                p
            } else {
                0.0
            };
            if l.is_finite() {
                xk = xk.max(l + pl);
            }
            if u.is_finite() {
                xk = xk.min(u - pu);
            }
            self.x[k] = xk;
        }
        self.evaluate_functions();
        for i in 0..self.m_in {
            let h = self.cons[self.m_eq + i];
            self.s[i] = (-h).max(push * h.abs().max(1.0));
        }

        match warm {
            Some(w) => {
                self.y.copy_from_slice(&w.constraints);
                for k in 0..n {
                    let i = self.free[k];
                    self.zl[k] = if self.lower[k].is_finite() {
                        w.lower[i].max(self.opts.warm_mu_init / (self.x[k] - self.lower[k]))
                    } else {
                        0.0
                    };
                    self.zu[k] = if self.upper[k].is_finite() {
                        w.upper[i].max(self.opts.warm_mu_init / (self.upper[k] - self.x[k]))
                    } else {
                        0.0
                    };
                }
                for i in 0..self.m_in {
                    let yi = self.y[self.m_eq + i];
                    self.v[i] = yi.max(self.opts.warm_mu_init / self.s[i]);
                }
                self.mu = self.opts.warm_mu_init;
            }
            None => {
                for k in 0..n {
                    self.zl[k] = if self.lower[k].is_finite() { 1.0 } else { 0.0 };
                    self.zu[k] = if self.upper[k].is_finite() { 1.0 } else { 0.0 };
                }
                self.v.iter_mut().for_each(|v| *v = 1.0);
                self.mu = self.opts.mu_init;
                self.least_squares_multipliers();
            }
        }
        self.tau = TAU_MIN.max(1.0 - self.mu);
        let theta0 = self.theta(&self.cons.clone(), &self.s.clone());
        self.theta_max = 1e4 * theta0.max(1.0);
        self.theta_min = 1e-4 * theta0.max(1.0);
        self.filter.clear();
    }

    /// Least-squares estimate of the constraint multipliers at the initial
    /// point; discarded when it comes out large.
    fn least_squares_multipliers(&mut self) {
        let n = self.n();
        let m = self.m();
        if m == 0 {
            return;
        }
        let mut values = self.kkt_values_skeleton();
        let hn = self.hess_map.len();
        for k in 0..n {
            values[hn + k] = 1.0;
        }
        let dn = hn + n + self.jac_map.len();
        for r in 0..m {
            values[dn + r] = if r < self.m_eq { 0.0 } else { -1.0 };
        }
        let ax = self.symbolic.assemble(&values);
        let Ok(factor) = self.symbolic.factor(&ax) else {
            return;
        };
        let mut rhs = vec![0.0; n + m];
        for k in 0..n {
            rhs[k] = -(self.grad[k] - self.zl[k] + self.zu[k]);
        }
        for i in 0..self.m_in {
            rhs[n + self.m_eq + i] = -self.v[i];
        }
        factor.solve(&mut rhs);
        let y = &rhs[n..];
        let big = y.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if big <= 1e3 {
            self.y.copy_from_slice(y);
        }
    }

    // ---------------------------------------------------------- evaluation

    fn evaluate_functions(&mut self) {
        let z = self.full(&self.x);
        self.f = self.nlp.objective(&z);
        let mut g = vec![0.0; self.n_full];
        self.nlp.objective_gradient(&z, &mut g);
        for (k, &i) in self.free.iter().enumerate() {
            self.grad[k] = g[i];
        }
        self.nlp.constraints(&z, &mut self.cons);
        self.nlp.jacobian_values(&z, &mut self.jac);
    }

    fn theta(&self, cons: &[f64], s: &[f64]) -> f64 {
        let eq: f64 = cons[..self.m_eq].iter().map(|c| c.abs()).sum();
        let ineq: f64 = cons[self.m_eq..].iter().zip(s).map(|(h, s)| (h + s).abs()).sum();
        eq + ineq
    }

    fn barrier_objective(&self, f: f64, x: &[f64], s: &[f64]) -> f64 {
        let mut phi = f;
        for k in 0..x.len() {
            let (l, u) = (self.lower[k], self.upper[k]);
            if l.is_finite() {
                phi -= self.mu * (x[k] - l).ln();
                if !u.is_finite() {
                    phi += KAPPA_D * self.mu * (x[k] - l);
                }
            }
            if u.is_finite() {
                phi -= self.mu * (u - x[k]).ln();
                if !l.is_finite() {
                    phi += KAPPA_D * self.mu * (u - x[k]);
                }
            }
        }
        for &si in s {
            phi -= self.mu * si.ln() - KAPPA_D * self.mu * si;
        }
        phi
    }

    /// `J^T y` over free columns.
    fn jac_t_times(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for &(k, r, c) in &self.jac_map {
            out[c] += self.jac[k] * y[r];
        }
        out
    }

    /// Gradient of the Lagrangian with respect to the free variables.
    fn lagrangian_gradient(&self) -> Vec<f64> {
        let mut g = self.jac_t_times(&self.y);
        for k in 0..self.n() {
            g[k] += self.grad[k] - self.zl[k] + self.zu[k];
        }
        g
    }

    /// Unscaled KKT measures `(dual, primal, complementarity)` of the
    /// exported multipliers (inequality multipliers taken from `y`).
    fn unscaled_errors(&self) -> (f64, f64, f64) {
        let dual = inf_norm(&self.lagrangian_gradient());
        let mut primal = 0.0f64;
        for r in 0..self.m_eq {
            primal = primal.max(self.cons[r].abs());
        }
        let mut compl = 0.0f64;
        for i in 0..self.m_in {
            let h = self.cons[self.m_eq + i];
            let w = self.y[self.m_eq + i];
            primal = primal.max(h.max(0.0));
            compl = compl.max((w * h).abs()).max(-w);
        }
        for k in 0..self.n() {
            if self.lower[k].is_finite() {
                compl = compl.max((self.zl[k] * (self.x[k] - self.lower[k])).abs());
            }
            if self.upper[k].is_finite() {
                compl = compl.max((self.zu[k] * (self.upper[k] - self.x[k])).abs());
            }
        }
        (dual, primal, compl)
    }

    /// Scaled barrier-problem optimality error.
    fn barrier_error(&self, mu: f64) -> f64 {
        let n = self.n();
        let m = self.m();
        let ysum: f64 = self.y.iter().map(|v| v.abs()).sum();
        let zsum: f64 = self.zl.iter().chain(&self.zu).chain(&self.v).map(|v| v.abs()).sum();
        let nz = self.zl.iter().chain(&self.zu).filter(|&&v| v != 0.0).count() + self.m_in;
        let s_d = ((ysum + zsum) / ((m + nz).max(1) as f64)).max(S_MAX) / S_MAX;
        let s_c = (zsum / (nz.max(1) as f64)).max(S_MAX) / S_MAX;
        let mut dual = inf_norm(&self.lagrangian_gradient());
        for i in 0..self.m_in {
            dual = dual.max((self.y[self.m_eq + i] - self.v[i]).abs());
        }
        let mut primal = 0.0f64;
        for r in 0..self.m_eq {
            primal = primal.max(self.cons[r].abs());
        }
        for i in 0..self.m_in {
            primal = primal.max((self.cons[self.m_eq + i] + self.s[i]).abs());
        }
        let mut compl = 0.0f64;
        for k in 0..n {
            if self.lower[k].is_finite() {
                compl = compl.max((self.zl[k] * (self.x[k] - self.lower[k]) - mu).abs());
            }
            if self.upper[k].is_finite() {
                compl = compl.max((self.zu[k] * (self.upper[k] - self.x[k]) - mu).abs());
            }
        }
        for i in 0..self.m_in {
            compl = compl.max((self.v[i] * self.s[i] - mu).abs());
        }
        (dual / s_d).max(primal).max(compl / s_c)
    }

    // ------------------------------------------------------- linear algebra

    fn kkt_values_skeleton(&self) -> Vec<f64> {
        vec![0.0; self.hess_map.len() + self.n() + self.jac_map.len() + self.m()]
    }

    /// Assemble and factorize the Newton matrix with inertia correction.
    fn factorize(&mut self) -> Option<Newton> {
        let n = self.n();
        let m = self.m();
        let z = self.full(&self.x);
        let mut hvals = vec![0.0; self.hess_nnz];
        self.nlp.hessian_values(&z, 1.0, &self.y, &mut hvals);

        let mut values = self.kkt_values_skeleton();
        let hn = self.hess_map.len();
        for (e, &(k, _, _)) in self.hess_map.iter().enumerate() {
            values[e] = hvals[k];
        }
        let mut sigma_x = vec![0.0; n];
        for k in 0..n {
            if self.lower[k].is_finite() {
                sigma_x[k] += self.zl[k] / (self.x[k] - self.lower[k]);
            }
            if self.upper[k].is_finite() {
                sigma_x[k] += self.zu[k] / (self.upper[k] - self.x[k]);
            }
        }
        let jn = hn + n;
        for (e, &(k, _, _)) in self.jac_map.iter().enumerate() {
            values[jn + e] = self.jac[k];
        }
        let sigma_s: Vec<f64> = self.v.iter().zip(&self.s).map(|(v, s)| v / s).collect();
        let dn = jn + self.jac_map.len();

        let mut delta_c = DELTA_C_BASE;
        let mut delta_w = 0.0;
        let mut attempt = 0;
        loop {
            for k in 0..n {
                values[hn + k] = sigma_x[k] + delta_w;
            }
            for r in 0..m {
                values[dn + r] = if r < self.m_eq {
                    -delta_c
                } else {
                    -1.0 / sigma_s[r - self.m_eq] - delta_c
                };
            }
            let ax = self.symbolic.assemble(&values);
            let result = self.symbolic.factor(&ax);
            let ok = match &result {
                Ok(f) => {
                    let (pos, neg) = f.inertia();
                    let tiny = f.pivots().iter().any(|d| d.abs() < 1e-14 * (1.0 + delta_w));
                    if tiny && delta_c < 1e-6 {
                        delta_c = 1e-8 * self.mu.powf(0.25).max(1e-2);
                    }
                    pos == n && neg == m && !tiny
                }
                Err(_) => {
                    delta_c = 1e-8 * self.mu.powf(0.25).max(1e-2);
                    false
                }
            };
            if ok {
                if delta_w > 0.0 {
                    self.delta_w_last = delta_w;
                }
                let factor = result.ok()?;
                return Some(Newton {
                    factor,
                    kkt_values: ax,
                    sigma_s,
                    delta_w,
                });
            }
            attempt += 1;
            delta_w = if attempt == 1 {
                if self.delta_w_last == 0.0 {
                    DELTA_W_INIT
                } else {
                    (self.delta_w_last / 3.0).max(DELTA_W_MIN)
                }
            } else if self.delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > DELTA_W_MAX {
                return None;
            }
        }
    }

    /// Solve with the factored matrix plus iterative refinement.
    fn kkt_solve(&self, newton: &Newton, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        newton.factor.solve(&mut x);
        let scale = inf_norm(rhs).max(1.0);
        let mut r = vec![0.0; rhs.len()];
        for _ in 0..3 {
            self.symbolic.multiply(&newton.kkt_values, &x, &mut r);
            let mut worst = 0.0f64;
            for i in 0..r.len() {
                r[i] = rhs[i] - r[i];
                worst = worst.max(r[i].abs());
            }
            if worst <= 1e-12 * scale {
                break;
            }
            newton.factor.solve(&mut r);
            for i in 0..x.len() {
                x[i] += r[i];
            }
        }
        x
    }

    /// Newton direction for the barrier problem. `constraint_rhs`, when
    /// given, replaces `[c_E; h + s]` (second-order correction).
    fn direction(&self, newton: &Newton, constraint_rhs: Option<&[f64]>) -> Step {
        let n = self.n();
        let m = self.m();
        let mu = self.mu;
        let mut rhs = vec![0.0; n + m];
        let jty = self.jac_t_times(&self.y);
        for k in 0..n {
            let mut r = self.grad[k] + jty[k];
            let (l, u) = (self.lower[k], self.upper[k]);
            if l.is_finite() {
                r -= mu / (self.x[k] - l);
                if !u.is_finite() {
                    r += KAPPA_D * mu;
                }
            }
            if u.is_finite() {
                r += mu / (u - self.x[k]);
                if !l.is_finite() {
                    r -= KAPPA_D * mu;
                }
            }
            rhs[k] = -r;
        }
        let r_s: Vec<f64> = (0..self.m_in)
            .map(|i| self.y[self.m_eq + i] - mu / self.s[i] + KAPPA_D * mu)
            .collect();
        for r in 0..self.m_eq {
            let c = constraint_rhs.map_or(self.cons[r], |c| c[r]);
            rhs[n + r] = -c;
        }
        for i in 0..self.m_in {
            let r = self.m_eq + i;
            let c = constraint_rhs.map_or(self.cons[r] + self.s[i], |c| c[r]);
            rhs[n + r] = -c + r_s[i] / newton.sigma_s[i];
        }

        let sol = self.kkt_solve(newton, &rhs);
        let dx = sol[..n].to_vec();
        let dy = sol[n..].to_vec();
        let ds: Vec<f64> = (0..self.m_in)
            .map(|i| (-r_s[i] - dy[self.m_eq + i]) / newton.sigma_s[i])
            .collect();
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for k in 0..n {
            if self.lower[k].is_finite() {
                let gap = self.x[k] - self.lower[k];
                dzl[k] = mu / gap - self.zl[k] - self.zl[k] / gap * dx[k];
            }
            if self.upper[k].is_finite() {
                let gap = self.upper[k] - self.x[k];
                dzu[k] = mu / gap - self.zu[k] + self.zu[k] / gap * dx[k];
            }
        }
        let dv: Vec<f64> = (0..self.m_in)
            .map(|i| mu / self.s[i] - self.v[i] - self.v[i] / self.s[i] * ds[i])
            .collect();
        Step {
            dx,
            ds,
            dy,
            dzl,
            dzu,
            dv,
        }
    }

    fn primal_step_bound(&self, dx: &[f64], ds: &[f64]) -> f64 {
        let mut alpha = 1.0f64;
        for k in 0..dx.len() {
            if dx[k] < 0.0 && self.lower[k].is_finite() {
                alpha = alpha.min(-self.tau * (self.x[k] - self.lower[k]) / dx[k]);
            }
            if dx[k] > 0.0 && self.upper[k].is_finite() {
                alpha = alpha.min(self.tau * (self.upper[k] - self.x[k]) / dx[k]);
            }
        }
        for i in 0..ds.len() {
            if ds[i] < 0.0 {
                alpha = alpha.min(-self.tau * self.s[i] / ds[i]);
            }
        }
        alpha
    }

    fn dual_step_bound(&self, step: &Step) -> f64 {
        let mut alpha = 1.0f64;
        let mut clip = |val: f64, d: f64| {
            if d < 0.0 && val > 0.0 {
                alpha = alpha.min(-self.tau * val / d);
            }
        };
        for k in 0..self.n() {
            if self.lower[k].is_finite() {
                clip(self.zl[k], step.dzl[k]);
            }
            if self.upper[k].is_finite() {
                clip(self.zu[k], step.dzu[k]);
            }
        }
        for i in 0..self.m_in {
            clip(self.v[i], step.dv[i]);
        }
        alpha
    }

    fn barrier_slope(&self, dx: &[f64], ds: &[f64]) -> f64 {
        let mu = self.mu;
        let mut slope = 0.0;
        for k in 0..dx.len() {
            let mut g = self.grad[k];
            let (l, u) = (self.lower[k], self.upper[k]);
            if l.is_finite() {
                g -= mu / (self.x[k] - l);
                if !u.is_finite() {
                    g += KAPPA_D * mu;
                }
            }
            if u.is_finite() {
                g += mu / (u - self.x[k]);
                if !l.is_finite() {
                    g -= KAPPA_D * mu;
                }
            }
            slope += g * dx[k];
        }
        for i in 0..ds.len() {
            slope += (-mu / self.s[i] + KAPPA_D * mu) * ds[i];
        }
        slope
    }

    fn filter_acceptable(&self, theta: f64, phi: f64) -> bool {
        self.filter.iter().all(|&(ft, fp)| theta < ft || phi < fp)
    }

    // ------------------------------------------------------------ main loop

    pub(crate) fn run(&mut self, z0: &[f64], warm: Option<&Multipliers>, stop: Option<StopTest<'_>>) -> SolveStatus {
        self.initialize(z0, warm);
        let tol = self.opts.kkt_tolerance;
        let ctol = self.opts.constraint_tolerance;
        let mu_floor = tol.min(ctol) / 10.0;
        let mut last_step = 0.0;
        let mut last_reg = 0.0;

        loop {
            if !self.iterate_is_finite() {
                return SolveStatus::Diverged;
            }
            let (dual, primal, compl) = self.unscaled_errors();
            let kkt = dual.max(primal).max(compl);
            self.log.push(IterationRecord {
                sigma: self.sigma,
                iteration: self.iterations,
                objective: self.f,
                constraint_violation: primal,
                kkt_residual: kkt,
                barrier: self.mu,
                step: last_step,
                regularization: last_reg,
                restoration: self.in_restoration,
            });
            debug!(
                "it {:4} f {:+.6e} viol {:.2e} dual {:.2e} compl {:.2e} mu {:.1e} step {:.2e} reg {:.1e}",
                self.iterations, self.f, primal, dual, compl, self.mu, last_step, last_reg
            );
            if let Some(stop) = stop {
                if stop(&self.full(&self.x)) {
                    return SolveStatus::Converged;
                }
            }
            if dual <= tol && compl <= tol && primal <= ctol {
                return SolveStatus::Converged;
            }
            if self.iterations >= self.opts.max_iterations {
                return SolveStatus::MaxIterations;
            }

            // barrier update
            while self.barrier_error(self.mu) <= KAPPA_EPS * self.mu && self.mu > mu_floor {
                self.mu = mu_floor.max((KAPPA_MU * self.mu).min(self.mu.powf(THETA_MU)));
                self.tau = TAU_MIN.max(1.0 - self.mu);
                self.filter.clear();
            }

            self.iterations += 1;
            let Some(newton) = self.factorize() else {
                return SolveStatus::Diverged;
            };
            last_reg = newton.delta_w;
            let step = self.direction(&newton, None);
            match self.line_search(&newton, &step) {
                Some(alpha) => last_step = alpha,
                None => {
                    if self.in_restoration || !self.opts.restoration_enabled {
                        return SolveStatus::Infeasible;
                    }
                    match self.restore() {
                        Ok(()) => last_step = 0.0,
                        Err(status) => return status,
                    }
                }
            }
        }
    }

    fn iterate_is_finite(&self) -> bool {
        self.f.is_finite()
            && self.cons.iter().all(|c| c.is_finite())
            && self.x.iter().all(|x| x.is_finite() && x.abs() < 1e20)
            && self.y.iter().all(|y| y.is_finite())
    }

    /// Backtracking filter line search. Returns the accepted primal step.
    fn line_search(&mut self, newton: &Newton, step: &Step) -> Option<f64> {
        let theta = self.theta(&self.cons, &self.s);
        let phi = self.barrier_objective(self.f, &self.x, &self.s);
        let slope = self.barrier_slope(&step.dx, &step.ds);
        let alpha_max = self.primal_step_bound(&step.dx, &step.ds);
        let alpha_z = self.dual_step_bound(step);

        // tiny step: the direction is numerically zero relative to x
        let tiny = step
            .dx
            .iter()
            .zip(&self.x)
            .all(|(d, x)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + x.abs()))
            && step
                .ds
                .iter()
                .zip(&self.s)
                .all(|(d, s)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + s))
            && theta <= 1e-4 * self.opts.constraint_tolerance.max(1e-12);
        if tiny {
            self.accept(step, alpha_max, alpha_z, None);
            return Some(alpha_max);
        }

        let alpha_min = if slope < 0.0 {
            GAMMA_ALPHA
                * GAMMA_THETA
                    .min(GAMMA_PHI * theta / -slope)
                    .min(DELTA_SWITCH * theta.powf(S_THETA) / (-slope).powf(S_PHI))
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };

        let mut alpha = alpha_max;
        let mut first = true;
        while alpha >= alpha_min {
            let x_t: Vec<f64> = self.x.iter().zip(&step.dx).map(|(x, d)| x + alpha * d).collect();
            let s_t: Vec<f64> = self.s.iter().zip(&step.ds).map(|(s, d)| s + alpha * d).collect();
            let (f_t, c_t) = self.trial_eval(&x_t);
            let theta_t = self.theta(&c_t, &s_t);
            let phi_t = self.barrier_objective(f_t, &x_t, &s_t);
            if let Some(f_type) = self.acceptable(theta, phi, theta_t, phi_t, alpha, slope) {
                log::trace!(
                    "accept alpha {:.2e} of max {:.2e} f_type {} theta {:.2e}->{:.2e} phi {:.6e}->{:.6e} slope {:.2e}",
                    alpha,
                    alpha_max,
                    f_type,
                    theta,
                    theta_t,
                    phi,
                    phi_t,
                    slope
                );
                self.commit(x_t, s_t, step, alpha, alpha_z, f_type, theta, phi);
                return Some(alpha);
            }
            log::trace!(
                "reject alpha {:.2e} theta {:.2e}->{:.2e} phi {:.6e}->{:.6e} filter {}",
                alpha,
                theta,
                theta_t,
                phi,
                phi_t,
                self.filter_acceptable(theta_t, phi_t)
            );

            if first && theta_t >= theta && self.opts.max_soc > 0 {
                if let Some(a) = self.second_order_correction(newton, theta, phi, slope, alpha, &c_t, &s_t) {
                    return Some(a);
                }
            }
            first = false;
            alpha *= self.opts.backtrack;
        }
        None
    }

    fn trial_eval(&self, x_t: &[f64]) -> (f64, Vec<f64>) {
        let z = self.full(x_t);
        let f = self.nlp.objective(&z);
        let mut c = vec![0.0; self.m()];
        self.nlp.constraints(&z, &mut c);
        (f, c)
    }

    /// Filter acceptance. `Some(true)` for an f-type (Armijo) step,
    /// `Some(false)` for an h-type step, `None` if rejected.
    fn acceptable(&self, theta: f64, phi: f64, theta_t: f64, phi_t: f64, alpha: f64, slope: f64) -> Option<bool> {
        if !(theta_t.is_finite() && phi_t.is_finite()) || theta_t > self.theta_max {
            return None;
        }
        if !self.filter_acceptable(theta_t, phi_t) {
            return None;
        }
        let switching =
            slope < 0.0 && alpha * (-slope).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA) * alpha.powf(S_PHI);
        if theta <= self.theta_min && switching {
            let armijo = phi_t <= phi + self.opts.armijo * alpha * slope + 10.0 * f64::EPSILON * phi.abs();
            return armijo.then_some(true);
        }
        let ok = theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta;
        ok.then_some(false)
    }

    #[allow(clippy::too_many_arguments)]
    fn second_order_correction(
        &mut self,
        newton: &Newton,
        theta: f64,
        phi: f64,
        slope: f64,
        alpha: f64,
        c_t: &[f64],
        s_t: &[f64],
    ) -> Option<f64> {
        let m = self.m();
        // c_soc = alpha * c(x) + c(x_trial)
        let mut c_soc = vec![0.0; m];
        for r in 0..self.m_eq {
            c_soc[r] = alpha * self.cons[r] + c_t[r];
        }
        for i in 0..self.m_in {
            let r = self.m_eq + i;
            c_soc[r] = alpha * (self.cons[r] + self.s[i]) + c_t[r] + s_t[i];
        }
        let mut theta_prev = theta;
        for _ in 0..self.opts.max_soc {
            let step = self.direction(newton, Some(&c_soc));
            let a = self.primal_step_bound(&step.dx, &step.ds);
            let x_t: Vec<f64> = self.x.iter().zip(&step.dx).map(|(x, d)| x + a * d).collect();
            let s_t: Vec<f64> = self.s.iter().zip(&step.ds).map(|(s, d)| s + a * d).collect();
            let (f_t, c_new) = self.trial_eval(&x_t);
            let theta_t = self.theta(&c_new, &s_t);
            let phi_t = self.barrier_objective(f_t, &x_t, &s_t);
            // the SOC step is judged with the original direction's slope
            if let Some(f_type) = self.acceptable(theta, phi, theta_t, phi_t, alpha, slope) {
                let alpha_z = self.dual_step_bound(&step);
                self.commit(x_t, s_t, &step, a, alpha_z, f_type, theta, phi);
                return Some(a);
            }
            if theta_t > KAPPA_SOC * theta_prev {
                return None;
            }
            theta_prev = theta_t;
            for r in 0..self.m_eq {
                c_soc[r] = a * c_soc[r] + c_new[r];
            }
            for i in 0..self.m_in {
                let r = self.m_eq + i;
                c_soc[r] = a * c_soc[r] + c_new[r] + s_t[i];
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        x_t: Vec<f64>,
        s_t: Vec<f64>,
        step: &Step,
        alpha: f64,
        alpha_z: f64,
        f_type: bool,
        theta: f64,
        phi: f64,
    ) {
        if !f_type {
            self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
        }
        self.x = x_t;
        self.s = s_t;
        self.accept(step, alpha, alpha_z, Some(()));
    }

    /// Update multipliers (and the primal point when `moved` is `None`).
    fn accept(&mut self, step: &Step, alpha: f64, alpha_z: f64, moved: Option<()>) {
        if moved.is_none() {
            for k in 0..self.n() {
                self.x[k] += alpha * step.dx[k];
            }
            for i in 0..self.m_in {
                self.s[i] += alpha * step.ds[i];
            }
        }
        for r in 0..self.m() {
            self.y[r] += alpha * step.dy[r];
        }
        for k in 0..self.n() {
            if self.lower[k].is_finite() {
                let gap = self.x[k] - self.lower[k];
                let z = self.zl[k] + alpha_z * step.dzl[k];
                self.zl[k] = z.clamp(self.mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * self.mu / gap);
            }
            if self.upper[k].is_finite() {
                let gap = self.upper[k] - self.x[k];
                let z = self.zu[k] + alpha_z * step.dzu[k];
                self.zu[k] = z.clamp(self.mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * self.mu / gap);
            }
        }
        for i in 0..self.m_in {
            let v = self.v[i] + alpha_z * step.dv[i];
            self.v[i] = v.clamp(self.mu / (KAPPA_SIGMA * self.s[i]), KAPPA_SIGMA * self.mu / self.s[i]);
        }
        self.evaluate_functions();
    }

    // ---------------------------------------------------------- restoration

    /// Minimize the constraint violation from the current point, then
    /// resume once the original filter accepts the restored point.
    fn restore(&mut self) -> Result<(), SolveStatus> {
        let theta0 = self.theta(&self.cons, &self.s);
        let phi0 = self.barrier_objective(self.f, &self.x, &self.s);
        self.filter
            .push(((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0));
        debug!("restoration from theta {:.3e}", theta0);

        let z = self.full(&self.x);
        let frozen = self.nlp.restoration_frozen();
        let resto = RestorationNlp::new(&self.nlp, &z, &self.cons, self.mu, &frozen);
        let mut opts = self.opts.clone();
        opts.max_iterations = self.opts.max_restoration_iterations;
        opts.restoration_enabled = false;
        opts.mu_init = self.mu.max(opts.kkt_tolerance);

        let theta_goal = 0.9 * theta0;
        let this = &*self;
        let stop = |zr: &[f64]| -> bool {
            let x = resto.original_part(zr);
            let xf: Vec<f64> = this.free.iter().map(|&i| x[i]).collect();
            let (f_t, c_t) = this.trial_eval(&xf);
            let s_t: Vec<f64> = (0..this.m_in)
                .map(|i| (-c_t[this.m_eq + i]).max(this.mu * 1e-2).max(1e-12))
                .collect();
            let theta_t = this.theta(&c_t, &s_t);
            let phi_t = this.barrier_objective(f_t, &xf, &s_t);
            theta_t <= theta_goal && this.filter_acceptable(theta_t, phi_t)
        };
        let zr0 = resto.initial_point(&z);
        let mut inner = Interior::new(&resto, &opts, self.sigma);
        inner.in_restoration = true;
        let status = inner.run(&zr0, None, Some(&stop));
        let restored = resto.original_part(&inner.full(&inner.x)).to_vec();
        let inner_iters = inner.iterations;
        let inner_log = std::mem::take(&mut inner.log);
        drop(inner);

        self.iterations += inner_iters;
        self.log.extend(inner_log.into_iter().map(|mut r| {
            r.restoration = true;
            r
        }));
        if status != SolveStatus::Converged {
            return Err(SolveStatus::Infeasible);
        }

        let xf: Vec<f64> = self.free.iter().map(|&i| restored[i]).collect();
        self.x = xf;
        for k in 0..self.n() {
            // keep strictly interior
            let (l, u) = (self.lower[k], self.upper[k]);
            if l.is_finite() {
                self.x[k] = self.x[k].max(l + 1e-12 * l.abs().max(1.0));
            }
            if u.is_finite() {
                self.x[k] = self.x[k].min(u - 1e-12 * u.abs().max(1.0));
            }
        }
        self.evaluate_functions();
        for i in 0..self.m_in {
            self.s[i] = (-self.cons[self.m_eq + i]).max(self.mu * 1e-2).max(1e-12);
            self.v[i] = self.v[i]
                .min(KAPPA_SIGMA * self.mu / self.s[i])
                .max(self.mu / self.s[i] * 1e-3);
        }
        for k in 0..self.n() {
            if self.lower[k].is_finite() {
                let gap = self.x[k] - self.lower[k];
                self.zl[k] = self.zl[k].clamp(self.mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * self.mu / gap);
            }
            if self.upper[k].is_finite() {
                let gap = self.upper[k] - self.x[k];
                self.zu[k] = self.zu[k].clamp(self.mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * self.mu / gap);
            }
        }
        self.y.iter_mut().for_each(|y| *y = 0.0);
        self.least_squares_multipliers();
        Ok(())
    }

    // --------------------------------------------------------------- output

    pub(crate) fn finish(self, status: SolveStatus, wall_time: f64) -> SolveOutcome {
        let (dual, primal, compl) = self.unscaled_errors();
        let z = self.full(&self.x);
        let n_full = self.n_full;
        let m = self.m();
        let mut lower = vec![0.0; n_full];
        let mut upper = vec![0.0; n_full];
        for (k, &i) in self.free.iter().enumerate() {
            lower[i] = self.zl[k];
            upper[i] = self.zu[k];
        }
        // fixed variables: bound multipliers absorb the stationarity residual
        let mut g = vec![0.0; n_full];
        self.nlp.objective_gradient(&z, &mut g);
        let mut jac = vec![0.0; self.jac_nnz];
        self.nlp.jacobian_values(&z, &mut jac);
        for (k, &(r, c)) in self.nlp.jacobian_structure().iter().enumerate() {
            g[c] += jac[k] * self.y[r];
        }
        let mut is_free = vec![false; n_full];
        for &i in &self.free {
            is_free[i] = true;
        }
        for i in 0..n_full {
            if !is_free[i] {
                lower[i] = g[i].max(0.0);
                upper[i] = (-g[i]).max(0.0);
            }
        }
        debug_assert_eq!(self.y.len(), m);
        SolveOutcome {
            solution: PrimalDual {
                z,
                multipliers: Multipliers {
                    constraints: self.y.clone(),
                    lower,
                    upper,
                },
            },
            status,
            iterations: self.iterations,
            kkt_residual: dual.max(primal).max(compl),
            constraint_violation: primal,
            complementarity: compl,
            objective: self.f,
            wall_time,
            log: self.log,
        }
    }
}

/// Stage-wise elimination order: variables of stage `k`, then the
/// constraints whose earliest stage is `k`, then stage `k + 1`. Variables
/// without a stage and constraints touching only such variables go last.
fn elimination_order<P: Nlp + ?Sized>(
    nlp: &P,
    free: &[usize],
    n: usize,
    m: usize,
    jac_map: &[(usize, usize, usize)],
) -> Vec<usize> {
    let stages = nlp.variable_stages();
    let var_stage: Vec<Option<usize>> = match &stages {
        Some(st) => free.iter().map(|&i| st[i]).collect(),
        None => vec![Some(0); n],
    };
    let mut con_stage: Vec<Option<usize>> = vec![None; m];
    for &(_, r, c) in jac_map {
        if let Some(sc) = var_stage[c] {
            con_stage[r] = Some(con_stage[r].map_or(sc, |s: usize| s.min(sc)));
        }
    }
    let mut keys: Vec<(usize, usize)> = Vec::with_capacity(n + m);
    for k in 0..n {
        keys.push((var_stage[k].map_or(usize::MAX - 1, |s| 2 * s), k));
    }
    for r in 0..m {
        keys.push((con_stage[r].map_or(usize::MAX, |s| 2 * s + 1), n + r));
    }
    keys.sort_unstable();
    keys.into_iter().map(|(_, i)| i).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}
