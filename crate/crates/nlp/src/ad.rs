//! Forward-mode algorithmic differentiation.
//!
//! Model code is written once against [`Scalar`] and evaluated with plain
//! `f64`, with [`Dual`] to obtain a dense local Jacobian, or with
//! [`HyperDual`] to obtain first and second derivatives in one sweep.
//! Tangent counts are compile-time constants, so every value lives on the
//! stack and a block evaluation allocates nothing.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the model code.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// First-order dual number carrying `N` tangent directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Independent variable seeded along tangent direction `i`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= df;
        }
        Self { v: f, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + rhs.d[i] * self.v;
        }
        Self { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.v += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.v -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.v * rhs, rhs)
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        let inv = 1.0 / rhs;
        self.chain(self.v * inv, inv)
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r)
    }
}

/// Second-order forward number: value, gradient and full symmetric Hessian
/// with respect to `N` seeded inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> HyperDual<N> {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    pub fn variable(v: f64, i: usize) -> Self {
        let mut out = Self::constant(v);
        out.g[i] = 1.0;
        out
    }

    /// Apply a scalar function with value `f`, slope `df` and curvature `ddf`.
    #[inline]
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..N {
            out.g[i] = df * self.g[i];
        }
        for i in 0..N {
            let gi = ddf * self.g[i];
            for j in 0..N {
                out.h[i][j] = df * self.h[i][j] + gi * self.g[j];
            }
        }
        out
    }

    fn scale(mut self, s: f64) -> Self {
        self.v *= s;
        for i in 0..N {
            self.g[i] *= s;
            for j in 0..N {
                self.h[i][j] *= s;
            }
        }
        self
    }
}

impl<const N: usize> Add for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..N {
            self.g[i] += rhs.g[i];
            for j in 0..N {
                self.h[i][j] += rhs.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..N {
            self.g[i] -= rhs.g[i];
            for j in 0..N {
                self.h[i][j] -= rhs.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.v * rhs.v);
        for i in 0..N {
            out.g[i] = self.g[i] * rhs.v + rhs.g[i] * self.v;
        }
        for i in 0..N {
            for j in 0..N {
                out.h[i][j] = self.h[i][j] * rhs.v + rhs.h[i][j] * self.v + self.g[i] * rhs.g[j] + rhs.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Div for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let recip = rhs.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
        self * recip
    }
}

impl<const N: usize> Neg for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Add<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.v += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.v -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl<const N: usize> Div<f64> for HyperDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.scale(1.0 / rhs)
    }
}

impl<const N: usize> Scalar for HyperDual<N> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
}

/// Dense Jacobian of `f: R^N -> R^m` at `x`, returned row-major (`m x N`).
pub fn jacobian<const N: usize, F>(x: &[f64; N], m: usize, f: F) -> Vec<f64>
where
    F: Fn(&[Dual<N>; N], &mut [Dual<N>]),
{
    let mut seeded = [Dual::constant(0.0); N];
    for i in 0..N {
        seeded[i] = Dual::variable(x[i], i);
    }
    let mut out = vec![Dual::constant(0.0); m];
    f(&seeded, &mut out);
    let mut jac = vec![0.0; m * N];
    for (r, o) in out.iter().enumerate() {
        jac[r * N..(r + 1) * N].copy_from_slice(&o.d);
    }
    jac
}

/// Weighted Hessian `sum_r w_r * d2 f_r` of `f: R^N -> R^m` at `x`.
pub fn weighted_hessian<const N: usize, F>(x: &[f64; N], weights: &[f64], f: F) -> [[f64; N]; N]
where
    F: Fn(&[HyperDual<N>; N], &mut [HyperDual<N>]),
{
    let mut seeded = [HyperDual::constant(0.0); N];
    for i in 0..N {
        seeded[i] = HyperDual::variable(x[i], i);
    }
    let mut out = vec![HyperDual::constant(0.0); weights.len()];
    f(&seeded, &mut out);
    let mut hess = [[0.0; N]; N];
    for (o, &w) in out.iter().zip(weights.iter()) {
        if w == 0.0 {
            continue;
        }
        for i in 0..N {
            for j in 0..N {
                hess[i][j] += w * o.h[i][j];
            }
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly<S: Scalar>(x: S, y: S) -> S {
        // x^2 y + sqrt(x) / y
        x * x * y + x.sqrt() / y
    }

    #[test]
    fn dual_matches_hand_derivatives() {
        let (x, y) = (1.7, 0.6);
        let r = poly(Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1));
        assert_relative_eq!(r.v, x * x * y + x.sqrt() / y, epsilon = 1e-14);
        assert_relative_eq!(r.d[0], 2.0 * x * y + 0.5 / (x.sqrt() * y), epsilon = 1e-13);
        assert_relative_eq!(r.d[1], x * x - x.sqrt() / (y * y), epsilon = 1e-13);
    }

    #[test]
    fn hyperdual_matches_hand_second_derivatives() {
        let (x, y) = (1.7, 0.6);
        let r = poly(HyperDual::<2>::variable(x, 0), HyperDual::<2>::variable(y, 1));
        let dxx = 2.0 * y - 0.25 / (x.powf(1.5) * y);
        let dxy = 2.0 * x - 0.5 / (x.sqrt() * y * y);
        let dyy = 2.0 * x.sqrt() / (y * y * y);
        assert_relative_eq!(r.h[0][0], dxx, epsilon = 1e-12);
        assert_relative_eq!(r.h[0][1], dxy, epsilon = 1e-12);
        assert_relative_eq!(r.h[1][0], dxy, epsilon = 1e-12);
        assert_relative_eq!(r.h[1][1], dyy, epsilon = 1e-12);
        assert_relative_eq!(r.g[0], 2.0 * x * y + 0.5 / (x.sqrt() * y), epsilon = 1e-13);
    }

    #[test]
    fn jacobian_helper_layout_is_row_major() {
        let jac = jacobian(&[2.0, 3.0], 2, |x, out| {
            out[0] = x[0] * x[1];
            out[1] = x[0] - x[1] * 4.0;
        });
        assert_eq!(jac, vec![3.0, 2.0, 1.0, -4.0]);
    }

    #[test]
    fn weighted_hessian_sums_outputs() {
        let h = weighted_hessian(&[2.0, 3.0], &[2.0, -1.0], |x, out| {
            out[0] = x[0] * x[1];
            out[1] = x[0] * x[0];
        });
        assert_eq!(h, [[-2.0, 2.0], [2.0, 0.0]]);
    }
}
