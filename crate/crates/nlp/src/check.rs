//! Independent certificates: KKT residual and finite-difference Jacobian
//! checks. Neither reuses solver internals.

use crate::problem::{Multipliers, Nlp};

/// Components of the first-order optimality residual.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktBreakdown {
    pub stationarity: f64,
    pub feasibility: f64,
    pub multiplier_sign: f64,
    pub complementarity: f64,
}

impl KktBreakdown {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.multiplier_sign)
            .max(self.complementarity)
    }
}

pub fn kkt_breakdown<P: Nlp + ?Sized>(p: &P, z: &[f64], mult: &Multipliers) -> KktBreakdown {
    let n = p.num_variables();
    let m_eq = p.num_equalities();
    let m = p.num_constraints();
    assert_eq!(z.len(), n);
    assert_eq!(mult.constraints.len(), m);
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    p.variable_bounds(&mut lo, &mut hi);

    let mut grad = vec![0.0; n];
    p.objective_gradient(z, &mut grad);
    let structure = p.jacobian_structure();
    let mut jac = vec![0.0; structure.len()];
    p.jacobian_values(z, &mut jac);
    for (k, &(r, c)) in structure.iter().enumerate() {
        grad[c] += jac[k] * mult.constraints[r];
    }
    let mut out = KktBreakdown::default();
    for i in 0..n {
        let zl = if lo[i].is_finite() { mult.lower[i] } else { 0.0 };
        let zu = if hi[i].is_finite() { mult.upper[i] } else { 0.0 };
        out.stationarity = out.stationarity.max((grad[i] - zl + zu).abs());
        out.multiplier_sign = out.multiplier_sign.max(-zl).max(-zu);
        if lo[i].is_finite() {
            out.feasibility = out.feasibility.max(lo[i] - z[i]);
            out.complementarity = out.complementarity.max((zl * (z[i] - lo[i])).abs());
        }
        if hi[i].is_finite() {
            out.feasibility = out.feasibility.max(z[i] - hi[i]);
            out.complementarity = out.complementarity.max((zu * (hi[i] - z[i])).abs());
        }
    }
    let mut c = vec![0.0; m];
    p.constraints(z, &mut c);
    for r in 0..m {
        if r < m_eq {
            out.feasibility = out.feasibility.max(c[r].abs());
        } else {
            let w = mult.constraints[r];
            out.feasibility = out.feasibility.max(c[r]);
            out.multiplier_sign = out.multiplier_sign.max(-w);
            out.complementarity = out.complementarity.max((w * c[r]).abs());
        }
    }
    out
}

/// Infinity norm of stationarity, feasibility, multiplier-sign and
/// complementary-slackness residuals.
pub fn kkt_residual<P: Nlp + ?Sized>(p: &P, z: &[f64], mult: &Multipliers) -> f64 {
    kkt_breakdown(p, z, mult).max()
}

/// Worst relative discrepancy `|fd - exact| / max(1, |exact|)` between
/// central differences and the analytic Jacobian over `columns`.
pub fn fd_check_columns<P: Nlp + ?Sized>(p: &P, z: &[f64], eps: f64, columns: &[usize]) -> f64 {
    let m = p.num_constraints();
    let n = p.num_variables();
    let structure = p.jacobian_structure();
    let mut values = vec![0.0; structure.len()];
    p.jacobian_values(z, &mut values);
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, &(r, c)) in structure.iter().enumerate() {
        by_col[c].push((r, values[k]));
    }

    let mut zp = z.to_vec();
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    let mut exact = vec![0.0; m];
    let mut worst = 0.0f64;
    for &j in columns {
        zp[j] = z[j] + eps;
        p.constraints(&zp, &mut cp);
        zp[j] = z[j] - eps;
        p.constraints(&zp, &mut cm);
        zp[j] = z[j];
        exact.iter_mut().for_each(|e| *e = 0.0);
        for &(r, v) in &by_col[j] {
            exact[r] += v;
        }
        for r in 0..m {
            let fd = (cp[r] - cm[r]) / (2.0 * eps);
            let err = (fd - exact[r]).abs() / exact[r].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// [`fd_check_columns`] over every column.
pub fn fd_check<P: Nlp + ?Sized>(p: &P, z: &[f64], eps: f64) -> f64 {
    let cols: Vec<usize> = (0..p.num_variables()).collect();
    fd_check_columns(p, z, eps, &cols)
}

/// Same check for the objective gradient.
pub fn fd_check_gradient<P: Nlp + ?Sized>(p: &P, z: &[f64], eps: f64) -> f64 {
    let n = p.num_variables();
    let mut g = vec![0.0; n];
    p.objective_gradient(z, &mut g);
    let mut zp = z.to_vec();
    let mut worst = 0.0f64;
    for j in 0..n {
        zp[j] = z[j] + eps;
        let fp = p.objective(&zp);
        zp[j] = z[j] - eps;
        let fm = p.objective(&zp);
        zp[j] = z[j];
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
    }
    worst
}
