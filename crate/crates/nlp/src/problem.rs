//! The solver-facing problem interface.

/// A smooth nonlinear program
///
/// ```text
///     min  f(z)
///     s.t. c_E(z) = 0
///          c_I(z) <= 0
///          lower <= z <= upper
/// ```
///
/// Constraint rows are stacked as `[c_E; c_I]`. Jacobian and Hessian
/// structures are fixed for the lifetime of the problem; duplicate entries
/// are summed. Variables whose lower and upper bounds coincide are treated
/// as parameters and removed from the Newton system.
pub trait Nlp {
    fn num_variables(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn num_inequalities(&self) -> usize;

    fn num_constraints(&self) -> usize {
        self.num_equalities() + self.num_inequalities()
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]);

    fn objective(&self, z: &[f64]) -> f64;
    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]);

    /// Stacked residuals `[c_E(z); c_I(z)]`.
    fn constraints(&self, z: &[f64], out: &mut [f64]);

    /// `(row, col)` pairs of the constraint Jacobian.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, z: &[f64], values: &mut [f64]);

    /// `(row, col)` pairs with `row >= col` of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;

    /// Lower triangle of `obj_factor * d2 f + sum_i multipliers[i] * d2 c_i`.
    fn hessian_values(&self, z: &[f64], obj_factor: f64, multipliers: &[f64], values: &mut [f64]);

    /// Optional elimination hint: the stage (time node) each variable belongs
    /// to, or `None` for variables coupled to every stage.
    fn variable_stages(&self) -> Option<Vec<Option<usize>>> {
        None
    }

    /// Variables held at their current value while the solver restores
    /// feasibility.
    fn restoration_frozen(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Positive per-variable scale factors for a solve started at `z0`;
    /// the solver then works with `z / scale`. `None` leaves the variables
    /// unscaled.
    fn variable_scaling(&self, _z0: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<T: Nlp + ?Sized> Nlp for &T {
    fn num_variables(&self) -> usize {
        (**self).num_variables()
    }
    fn num_equalities(&self) -> usize {
        (**self).num_equalities()
    }
    fn num_inequalities(&self) -> usize {
        (**self).num_inequalities()
    }
    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        (**self).variable_bounds(lower, upper)
    }
    fn objective(&self, z: &[f64]) -> f64 {
        (**self).objective(z)
    }
    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        (**self).objective_gradient(z, grad)
    }
    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        (**self).constraints(z, out)
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (**self).jacobian_structure()
    }
    fn jacobian_values(&self, z: &[f64], values: &mut [f64]) {
        (**self).jacobian_values(z, values)
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (**self).hessian_structure()
    }
    fn hessian_values(&self, z: &[f64], obj_factor: f64, multipliers: &[f64], values: &mut [f64]) {
        (**self).hessian_values(z, obj_factor, multipliers, values)
    }
    fn variable_stages(&self) -> Option<Vec<Option<usize>>> {
        (**self).variable_stages()
    }
    fn restoration_frozen(&self) -> Vec<usize> {
        (**self).restoration_frozen()
    }
    fn variable_scaling(&self, z0: &[f64]) -> Option<Vec<f64>> {
        (**self).variable_scaling(z0)
    }
}

/// An NLP carrying a complementarity relaxation parameter that a homotopy
/// can tighten.
pub trait Relaxable: Nlp {
    fn relaxation(&self) -> f64;
    fn set_relaxation(&mut self, sigma: f64);

    /// Right-hand side of a single relaxed complementarity row, when it is
    /// not the relaxation parameter itself.
    fn row_relaxation(&self) -> f64 {
        self.relaxation()
    }
}

/// Lagrange multipliers in the sign convention
/// `L = f + y^T c - z_L^T (z - lower) - z_U^T (upper - z)`, with the
/// inequality part of `y` and both bound multipliers non-negative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Multipliers {
    pub constraints: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            constraints: vec![0.0; m],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }
}
