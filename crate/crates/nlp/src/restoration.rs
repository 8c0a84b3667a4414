//! Feasibility restoration subproblem.
//!
//! ```text
//!     min  rho * (sum p + sum n) + zeta/2 * || D (z - z_ref) ||^2
//!     s.t. c_E(z) - p_E + n_E = 0
//!          c_I(z) - p_I      <= 0
//!          p, n >= 0,  original bounds on z
//! ```
//!
//! Variables the problem marks as frozen are fixed at their reference value.

use crate::problem::Nlp;

const RHO: f64 = 1000.0;

pub(crate) struct RestorationNlp<'a> {
    inner: &'a dyn Nlp,
    n: usize,
    m_eq: usize,
    m_in: usize,
    z_ref: Vec<f64>,
    weight: Vec<f64>,
    frozen: Vec<bool>,
    zeta: f64,
    mu: f64,
    c_ref: Vec<f64>,
    row_stage: Vec<Option<usize>>,
}

impl<'a> RestorationNlp<'a> {
    pub(crate) fn new(inner: &'a dyn Nlp, z_ref: &[f64], c_ref: &[f64], mu: f64, frozen: &[usize]) -> Self {
        let n = inner.num_variables();
        let m_eq = inner.num_equalities();
        let m_in = inner.num_inequalities();
        let mut fz = vec![false; n];
        for &i in frozen {
            fz[i] = true;
        }
        let weight = z_ref.iter().map(|z| (1.0 / z.abs().max(1.0)).powi(2)).collect();
        let row_stage = match inner.variable_stages() {
            Some(st) => {
                let mut rs: Vec<Option<usize>> = vec![None; m_eq + m_in];
                for (r, c) in inner.jacobian_structure() {
                    if let Some(s) = st[c] {
                        rs[r] = Some(rs[r].map_or(s, |t: usize| t.min(s)));
                    }
                }
                rs
            }
            None => vec![Some(0); m_eq + m_in],
        };
        Self {
            inner,
            n,
            m_eq,
            m_in,
            z_ref: z_ref.to_vec(),
            weight,
            frozen: fz,
            zeta: mu.sqrt(),
            mu,
            c_ref: c_ref.to_vec(),
            row_stage,
        }
    }

    fn m(&self) -> usize {
        self.m_eq + self.m_in
    }

    pub(crate) fn original_part<'z>(&self, zr: &'z [f64]) -> &'z [f64] {
        &zr[..self.n]
    }

    /// Reference point with elastic variables that make every row feasible.
    pub(crate) fn initial_point(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        out.resize(self.n + self.m() + self.m_eq, 0.0);
        let mu = self.mu.max(1e-8);
        for r in 0..self.m_eq {
            let c = self.c_ref[r];
            let a = (mu - RHO * c) / (2.0 * RHO);
            let nn = a + (a * a + mu * c / (2.0 * RHO)).sqrt();
            out[self.n + r] = c + nn;
            out[self.n + self.m() + r] = nn;
        }
        for i in 0..self.m_in {
            let r = self.m_eq + i;
            out[self.n + r] = self.c_ref[r].max(0.0) + mu;
        }
        out
    }
}

impl Nlp for RestorationNlp<'_> {
    fn num_variables(&self) -> usize {
        self.n + self.m() + self.m_eq
    }
    fn num_equalities(&self) -> usize {
        self.m_eq
    }
    fn num_inequalities(&self) -> usize {
        self.m_in
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        self.inner.variable_bounds(&mut lower[..self.n], &mut upper[..self.n]);
        for i in 0..self.n {
            if self.frozen[i] {
                lower[i] = self.z_ref[i];
                upper[i] = self.z_ref[i];
            }
        }
        for i in self.n..self.num_variables() {
            lower[i] = 0.0;
            upper[i] = f64::INFINITY;
        }
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let elastic: f64 = z[self.n..].iter().sum();
        let mut prox = 0.0;
        for i in 0..self.n {
            let d = z[i] - self.z_ref[i];
            prox += self.weight[i] * d * d;
        }
        RHO * elastic + 0.5 * self.zeta * prox
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        for i in 0..self.n {
            grad[i] = self.zeta * self.weight[i] * (z[i] - self.z_ref[i]);
        }
        for g in grad[self.n..].iter_mut() {
            *g = RHO;
        }
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        self.inner.constraints(&z[..self.n], out);
        for r in 0..self.m() {
            out[r] -= z[self.n + r];
        }
        for r in 0..self.m_eq {
            out[r] += z[self.n + self.m() + r];
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.jacobian_structure();
        for r in 0..self.m() {
            s.push((r, self.n + r));
        }
        for r in 0..self.m_eq {
            s.push((r, self.n + self.m() + r));
        }
        s
    }

    fn jacobian_values(&self, z: &[f64], values: &mut [f64]) {
        let k = values.len() - self.m() - self.m_eq;
        self.inner.jacobian_values(&z[..self.n], &mut values[..k]);
        for v in values[k..k + self.m()].iter_mut() {
            *v = -1.0;
        }
        for v in values[k + self.m()..].iter_mut() {
            *v = 1.0;
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.hessian_structure();
        s.extend((0..self.n).map(|i| (i, i)));
        s
    }

    fn hessian_values(&self, z: &[f64], obj_factor: f64, multipliers: &[f64], values: &mut [f64]) {
        let k = values.len() - self.n;
        self.inner
            .hessian_values(&z[..self.n], 0.0, multipliers, &mut values[..k]);
        for i in 0..self.n {
            values[k + i] = obj_factor * self.zeta * self.weight[i];
        }
    }

    fn variable_stages(&self) -> Option<Vec<Option<usize>>> {
        let mut st = self.inner.variable_stages()?;
        st.extend(self.row_stage.iter().copied());
        st.extend(self.row_stage[..self.m_eq].iter().copied());
        Some(st)
    }
}
