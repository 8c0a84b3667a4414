//! Sparse symmetric LDL^T factorization without pivoting.
//!
//! The matrix is supplied as a list of `(row, col)` entries (either
//! triangle, duplicates summed) together with an elimination order. The
//! symbolic phase builds the permuted upper-triangular CSC pattern and the
//! elimination tree once; the numeric phase is the up-looking algorithm
//! used by QDLDL and reports the inertia of `D`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("zero pivot at permuted column {0}")]
    ZeroPivot(usize),
    #[error("non-finite pivot at permuted column {0}")]
    NonFinite(usize),
}

/// Pattern, ordering and elimination tree of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// upper-triangular CSC of the permuted matrix
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// `slot[k]` is the position in `ax` that input entry `k` adds into
    slot: Vec<usize>,
    etree: Vec<Option<usize>>,
    lp: Vec<usize>,
}

impl SymbolicLdl {
    /// `entries` are `(row, col)` in original numbering. Every diagonal is
    /// added to the pattern whether listed or not.
    pub fn new(n: usize, entries: &[(usize, usize)], perm: Vec<usize>) -> Self {
        assert_eq!(perm.len(), n);
        let mut iperm = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        assert!(iperm.iter().all(|&i| i != usize::MAX), "perm is not a permutation");

        // (col, row) in permuted upper triangle, plus diagonals
        let mut keyed: Vec<(usize, usize, usize)> = entries
            .iter()
            .enumerate()
            .map(|(k, &(r, c))| {
                let (a, b) = (iperm[r], iperm[c]);
                (a.max(b), a.min(b), k)
            })
            .collect();
        keyed.extend((0..n).map(|j| (j, j, usize::MAX)));
        keyed.sort_unstable();

        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(keyed.len());
        let mut slot = vec![0usize; entries.len()];
        let mut last: Option<(usize, usize)> = None;
        for &(col, row, k) in &keyed {
            if last != Some((col, row)) {
                ai.push(row);
                ap[col + 1] += 1;
                last = Some((col, row));
            }
            if k != usize::MAX {
                slot[k] = ai.len() - 1;
            }
        }
        for j in 0..n {
            ap[j + 1] += ap[j];
        }

        let (etree, lnz) = elimination_tree(n, &ap, &ai);
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + lnz[j];
        }

        Self {
            n,
            perm,
            ap,
            ai,
            slot,
            etree,
            lp,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Scatter entry values into the permuted upper-triangular storage.
    pub fn assemble(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.slot.len());
        let mut ax = vec![0.0; self.ai.len()];
        for (k, &v) in values.iter().enumerate() {
            ax[self.slot[k]] += v;
        }
        ax
    }

    /// `y = A x` in original numbering for assembled storage `ax`.
    pub fn multiply(&self, ax: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let oj = self.perm[j];
            for p in self.ap[j]..self.ap[j + 1] {
                let oi = self.perm[self.ai[p]];
                y[oi] += ax[p] * x[oj];
                if oi != oj {
                    y[oj] += ax[p] * x[oi];
                }
            }
        }
    }

    /// Numeric factorization of assembled storage `ax`.
    pub fn factor(&self, ax: &[f64]) -> Result<LdlFactor, LdlError> {
        let n = self.n;
        let nnz = self.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];

        let mut y_marked = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if !y_marked[b] {
                    y_marked[b] = true;
                    elim[0] = b;
                    let mut n_elim = 1;
                    let mut next = self.etree[b];
                    while let Some(i) = next {
                        if i >= k || y_marked[i] {
                            break;
                        }
                        y_marked[i] = true;
                        elim[n_elim] = i;
                        n_elim += 1;
                        next = self.etree[i];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }

            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let yc = y_vals[c];
                let end = next_space[c];
                for q in self.lp[c]..end {
                    y_vals[li[q]] -= lx[q] * yc;
                }
                li[end] = k;
                let l = yc * dinv[c];
                lx[end] = l;
                d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }

            if !d[k].is_finite() {
                return Err(LdlError::NonFinite(k));
            }
            if d[k] == 0.0 {
                return Err(LdlError::ZeroPivot(k));
            }
            dinv[k] = 1.0 / d[k];
        }

        Ok(LdlFactor {
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
            dinv,
        })
    }
}

fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut work = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![None; n];
    for j in 0..n {
        work[j] = j;
        for &row in &ai[ap[j]..ap[j + 1]] {
            let mut i = row;
            while work[i] != j {
                if etree[i].is_none() {
                    etree[i] = Some(j);
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i].expect("etree parent set above");
            }
        }
    }
    (etree, lnz)
}

/// Numeric `P A P^T = L D L^T` factor.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// `(positive, negative)` pivot counts; with no zero pivots this is the
    /// inertia of the matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.d.len() - pos)
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Solve `A x = b` in place (original numbering).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                x[self.li[p]] -= self.lx[p] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[p] * x[self.li[p]];
            }
            x[i] = xi;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_entries(a: &[Vec<f64>]) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut e = Vec::new();
        let mut v = Vec::new();
        for i in 0..a.len() {
            for j in 0..=i {
                if a[i][j] != 0.0 {
                    e.push((i, j));
                    v.push(a[i][j]);
                }
            }
        }
        (e, v)
    }

    #[test]
    fn solves_quasi_definite_kkt() {
        // [H J^T; J -d] with H = diag(2,3,4)
        let a = vec![
            vec![2.0, 0.0, 0.0, 1.0, 0.0],
            vec![0.0, 3.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 4.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0, -1e-8, 0.0],
            vec![0.0, 1.0, 1.0, 0.0, -1e-8],
        ];
        let (e, v) = dense_entries(&a);
        for perm in [vec![0, 1, 2, 3, 4], vec![4, 2, 0, 3, 1], vec![0, 3, 1, 4, 2]] {
            let sym = SymbolicLdl::new(5, &e, perm);
            let ax = sym.assemble(&v);
            let f = sym.factor(&ax).unwrap();
            assert_eq!(f.inertia(), (3, 2));
            let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
            let mut b = vec![0.0; 5];
            sym.multiply(&ax, &x_true, &mut b);
            f.solve(&mut b);
            for i in 0..5 {
                assert_relative_eq!(b[i], x_true[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let e = vec![(0, 0), (0, 0), (1, 0), (0, 1), (1, 1)];
        let v = vec![1.0, 1.0, 0.5, 0.5, 3.0];
        let sym = SymbolicLdl::new(2, &e, vec![1, 0]);
        let ax = sym.assemble(&v);
        let mut y = vec![0.0; 2];
        sym.multiply(&ax, &[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 4.0]);
    }

    #[test]
    fn reports_zero_pivot() {
        let sym = SymbolicLdl::new(2, &[(1, 0)], vec![0, 1]);
        let ax = sym.assemble(&[1.0]);
        assert_eq!(sym.factor(&ax).unwrap_err(), LdlError::ZeroPivot(0));
    }

    #[test]
    fn detects_indefinite_inertia() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let (e, v) = dense_entries(&a);
        let sym = SymbolicLdl::new(2, &e, vec![0, 1]);
        let f = sym.factor(&sym.assemble(&v)).unwrap();
        assert_eq!(f.inertia(), (1, 1));
    }
}
