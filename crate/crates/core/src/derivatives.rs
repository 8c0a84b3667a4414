//! First derivatives of the transcribed problem and a finite-difference
//! validator.

use cpc_nlp::Nlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::transcription::{NlpProblem, TranscriptionError};

/// Coordinate-format sparse matrix with one triplet per structural nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseJacobian {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseJacobian {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.triplets
            .iter()
            .filter(|t| t.0 == row && t.1 == col)
            .map(|t| t.2)
            .sum()
    }

    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.triplets.iter().map(|&(r, c, _)| (r, c)).collect()
    }

    /// Dense row-major copy, for small problems and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for &(r, c, v) in &self.triplets {
            d[r * self.cols + c] += v;
        }
        d
    }
}

fn check(p: &NlpProblem, z: &[f64]) -> Result<(), TranscriptionError> {
    if z.len() != p.num_variables() {
        return Err(TranscriptionError::Dimension(format!(
            "decision vector has length {}, problem expects {}",
            z.len(),
            p.num_variables()
        )));
    }
    Ok(())
}

/// Exact Jacobian of the stacked `[equalities; inequalities]` residuals.
pub fn constraint_jacobian(p: &NlpProblem, z: &[f64]) -> Result<SparseJacobian, TranscriptionError> {
    check(p, z)?;
    let structure = p.jacobian_structure();
    let mut values = vec![0.0; structure.len()];
    p.jacobian_values(z, &mut values);
    Ok(SparseJacobian {
        rows: p.num_constraints(),
        cols: p.num_variables(),
        triplets: structure.into_iter().zip(values).map(|((r, c), v)| (r, c, v)).collect(),
    })
}

pub fn cost_gradient(p: &NlpProblem, z: &[f64]) -> Result<Vec<f64>, TranscriptionError> {
    check(p, z)?;
    let mut g = vec![0.0; z.len()];
    p.objective_gradient(z, &mut g);
    Ok(g)
}

/// Worst relative discrepancy `|fd - exact| / max(1, |exact|)` between
/// central differences and the exact Jacobian over all columns.
pub fn fd_check(p: &NlpProblem, z: &[f64], eps: f64) -> f64 {
    cpc_nlp::fd_check(p, z, eps)
}

/// [`fd_check`] restricted to the given columns.
pub fn fd_check_columns(p: &NlpProblem, z: &[f64], eps: f64, columns: &[usize]) -> f64 {
    cpc_nlp::fd_check_columns(p, z, eps, columns)
}

/// Seed of the point sampler; fixed so every run checks the same points.
pub const CHECK_SEED: u64 = 0x5eed_cafe;

/// Random point inside the variable bounds near `base`: every free
/// variable moves by a uniform perturbation of half-width `spread` and is
/// clamped to its box; `t_N` is scaled by a factor in `[0.8, 1.25]`.
pub fn random_point<R: Rng>(p: &NlpProblem, base: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = p.bounds();
    let mut z: Vec<f64> = base
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&b, (&l, &h))| {
            if l == h {
                l
            } else {
                (b + rng.gen_range(-spread..spread)).clamp(l, h)
            }
        })
        .collect();
    z[0] = (base[0] * rng.gen_range(0.8..1.25)).max(lo[0]);
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub points: usize,
    pub columns_per_point: usize,
    /// Worst constraint-Jacobian discrepancy over all points.
    pub jacobian: f64,
    /// Worst objective-gradient discrepancy over all points.
    pub gradient: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.jacobian.max(self.gradient)
    }
}

/// Finite-difference check at `points` random points around `base`. With
/// `sample_columns` set, each point checks that many randomly chosen
/// columns instead of all of them.
pub fn check_gradients(
    p: &NlpProblem,
    base: &[f64],
    points: usize,
    eps: f64,
    sample_columns: Option<usize>,
) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(CHECK_SEED);
    let n = p.num_variables();
    let all: Vec<usize> = (0..n).collect();
    let mut out = GradientCheck {
        points,
        columns_per_point: sample_columns.map_or(n, |c| c.min(n)),
        jacobian: 0.0,
        gradient: 0.0,
    };
    for _ in 0..points {
        let z = random_point(p, base, 0.5, &mut rng);
        let cols = match sample_columns {
            Some(c) if c < n => rand::seq::index::sample(&mut rng, n, c).into_vec(),
            _ => all.clone(),
        };
        out.jacobian = out.jacobian.max(cpc_nlp::fd_check_columns(p, &z, eps, &cols));
        out.gradient = out.gradient.max(cpc_nlp::fd_check_gradient(p, &z, eps));
    }
    out
}
