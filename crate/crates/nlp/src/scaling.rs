//! Diagonal variable scaling: the solver iterates on `z / d`.

use crate::problem::{Multipliers, Nlp};

pub(crate) struct Scaled<'a, P: Nlp + ?Sized> {
    nlp: &'a P,
    d: Vec<f64>,
    jac_cols: Vec<usize>,
    hess_pairs: Vec<(usize, usize)>,
}

impl<'a, P: Nlp + ?Sized> Scaled<'a, P> {
    pub(crate) fn new(nlp: &'a P, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), nlp.num_variables());
        assert!(
            d.iter().all(|&v| v > 0.0 && v.is_finite()),
            "scale factors must be positive"
        );
        let jac_cols = nlp.jacobian_structure().iter().map(|&(_, c)| c).collect();
        let hess_pairs = nlp.hessian_structure();
        Self {
            nlp,
            d,
            jac_cols,
            hess_pairs,
        }
    }

    fn unscale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    pub(crate) fn scale_point(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.d).map(|(z, d)| z / d).collect()
    }

    pub(crate) fn unscale_point(&self, x: &[f64]) -> Vec<f64> {
        self.unscale(x)
    }

    pub(crate) fn scale_multipliers(&self, m: &Multipliers) -> Multipliers {
        let mul = |v: &[f64]| -> Vec<f64> {
            if v.len() == self.d.len() {
                v.iter().zip(&self.d).map(|(v, d)| v * d).collect()
            } else {
                v.to_vec()
            }
        };
        Multipliers {
            constraints: m.constraints.clone(),
            lower: mul(&m.lower),
            upper: mul(&m.upper),
        }
    }

    pub(crate) fn unscale_multipliers(&self, m: &mut Multipliers) {
        for (v, d) in m.lower.iter_mut().chain(m.upper.iter_mut()).zip(self.d.iter().cycle()) {
            *v /= d;
        }
    }
}

impl<P: Nlp + ?Sized> Nlp for Scaled<'_, P> {
    fn num_variables(&self) -> usize {
        self.nlp.num_variables()
    }
    fn num_equalities(&self) -> usize {
        self.nlp.num_equalities()
    }
    fn num_inequalities(&self) -> usize {
        self.nlp.num_inequalities()
    }
    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        self.nlp.variable_bounds(lower, upper);
        for i in 0..self.d.len() {
            lower[i] /= self.d[i];
            upper[i] /= self.d[i];
        }
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.nlp.objective(&self.unscale(x))
    }
    fn objective_gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.nlp.objective_gradient(&self.unscale(x), grad);
        grad.iter_mut().zip(&self.d).for_each(|(g, d)| *g *= d);
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        self.nlp.constraints(&self.unscale(x), out)
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.nlp.jacobian_structure()
    }
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) {
        self.nlp.jacobian_values(&self.unscale(x), values);
        for (v, &c) in values.iter_mut().zip(&self.jac_cols) {
            *v *= self.d[c];
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_pairs.clone()
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, multipliers: &[f64], values: &mut [f64]) {
        self.nlp
            .hessian_values(&self.unscale(x), obj_factor, multipliers, values);
        for (v, &(r, c)) in values.iter_mut().zip(&self.hess_pairs) {
            *v *= self.d[r] * self.d[c];
        }
    }
    fn variable_stages(&self) -> Option<Vec<Option<usize>>> {
        self.nlp.variable_stages()
    }
    fn restoration_frozen(&self) -> Vec<usize> {
        self.nlp.restoration_frozen()
    }
}
