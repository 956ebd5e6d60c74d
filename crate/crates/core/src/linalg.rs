//! Sparse matrices and linear solvers for the exact oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

/// Systems up to this many unknowns are solved by dense LU.
pub const DENSE_LIMIT: usize = 3000;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|r| self.row(r).find(|(c, _)| *c == r).map_or(0.0, |(_, v)| v))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Drops row `pin` and column `pin`.
    pub fn without(&self, pin: usize) -> CsrMatrix {
        let shift = |i: usize| if i > pin { i - 1 } else { i };
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in (0..self.n_rows).filter(|&r| r != pin) {
            for (c, v) in self.row(r).filter(|(c, _)| *c != pin) {
                triplets.push((shift(r), shift(c), v));
            }
        }
        CsrMatrix::from_triplets(self.n_rows - 1, self.n_cols - 1, triplets)
    }

    /// `max_r |(A x - b)_r|`.
    pub fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        (0..self.n_rows)
            .map(|r| {
                let mut acc = CompensatedSum::new();
                for (c, v) in self.row(r) {
                    acc.add(v * x[c]);
                }
                acc.add(-b[r]);
                acc.value().abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves `A x = b`, densely for small systems and by Jacobi-preconditioned
/// BiCGSTAB otherwise.
pub fn solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.n_rows() != a.n_cols() || b.len() != a.n_rows() {
        return Err(Error::Solver("system is not square".into()));
    }
    if a.n_rows() <= DENSE_LIMIT {
        solve_dense(&a.to_dense(), b)
    } else {
        bicgstab(a, b, 1e-14, 20 * a.n_rows().max(1000))
    }
}

pub fn solve_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.clone()
        .lu()
        .solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::Solver("singular matrix".into()))
}

/// Solves a system whose kernel is spanned by one vector with a nonzero entry
/// at `pin`, by fixing `x[pin] = 0` and discarding equation `pin`. The
/// right-hand side must lie in the range of `A`.
pub fn solve_pinned(a: &CsrMatrix, b: &[f64], pin: usize) -> Result<Vec<f64>> {
    let reduced = a.without(pin);
    let rb: Vec<f64> = b.iter().enumerate().filter(|(i, _)| *i != pin).map(|(_, v)| *v).collect();
    let y = solve(&reduced, &rb)?;
    let mut x = Vec::with_capacity(b.len());
    x.extend_from_slice(&y[..pin]);
    x.push(0.0);
    x.extend_from_slice(&y[pin..]);
    Ok(x)
}

/// Factorization of a system with a one-dimensional kernel, reduced by
/// fixing the unknown at `pin` and discarding equation `pin`.
pub struct PinnedSolver {
    pin: usize,
    n: usize,
    /// Column `pin` of the full matrix without its entry in row `pin`.
    pin_column: Vec<f64>,
    inner: Reduced,
}

enum Reduced {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Sparse(CsrMatrix),
}

impl PinnedSolver {
    pub fn new(a: &CsrMatrix, pin: usize) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() || pin >= n || n < 2 {
            return Err(Error::Solver("pinned system must be square with at least two unknowns".into()));
        }
        let mut pin_column = vec![0.0; n - 1];
        for r in (0..n).filter(|&r| r != pin) {
            let rr = if r > pin { r - 1 } else { r };
            pin_column[rr] = a.row(r).filter(|(c, _)| *c == pin).map(|(_, v)| v).sum();
        }
        let reduced = a.without(pin);
        let inner = if reduced.n_rows() <= DENSE_LIMIT {
            let lu = reduced.to_dense().lu();
            if !lu.is_invertible() {
                return Err(Error::Solver("reduced system is singular".into()));
            }
            Reduced::Dense(lu)
        } else {
            Reduced::Sparse(reduced)
        };
        Ok(Self { pin, n, pin_column, inner })
    }

    /// Solves `A x = b` with `x[pin] = value`; equation `pin` is not
    /// enforced.
    pub fn solve(&self, b: &[f64], value: f64) -> Result<Vec<f64>> {
        let rb: Vec<f64> = b
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.pin)
            .zip(&self.pin_column)
            .map(|((_, v), c)| v - value * c)
            .collect();
        let y = match &self.inner {
            Reduced::Dense(lu) => lu
                .solve(&DVector::from_column_slice(&rb))
                .map(|x| x.as_slice().to_vec())
                .ok_or_else(|| Error::Solver("singular matrix".into()))?,
            Reduced::Sparse(m) => bicgstab(m, &rb, 1e-14, 20 * self.n.max(1000))?,
        };
        let mut x = Vec::with_capacity(self.n);
        x.extend_from_slice(&y[..self.pin]);
        x.push(value);
        x.extend_from_slice(&y[self.pin..]);
        Ok(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB; stops when `|r| <= tol |b|`.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let inv_diag: Vec<f64> =
        a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.mul_vec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        a.mul_vec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm(&r);
        best = best.min(rn / bnorm);
        if rn <= tol * bnorm {
            return Ok(x);
        }
        if !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    Err(Error::Solver(format!("BiCGSTAB did not converge (relative residual {best:e})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.2));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense()[(0, 1)], 1.5);
    }

    #[test]
    fn iterative_and_dense_agree() {
        let a = laplacian_1d(400);
        let b: Vec<f64> = (0..400).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let xd = solve_dense(&a.to_dense(), &b).unwrap();
        let xi = bicgstab(&a, &b, 1e-14, 10_000).unwrap();
        for (p, q) in xd.iter().zip(&xi) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(a.residual_inf(&xi, &b) < 1e-11);
    }

    #[test]
    fn pinned_solve_of_singular_chain() {
        // Generator of a 3-cycle: kernel spanned by constants.
        let n = 3;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 1.0));
            t.push((i, (i + 1) % n, -0.7));
            t.push((i, (i + 2) % n, -0.3));
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let b = [1.0, -0.25, -0.75];
        let x = solve_pinned(&a, &b, 0).unwrap();
        assert_eq!(x[0], 0.0);
        assert!(a.residual_inf(&x, &b) < 1e-14);
        let solver = PinnedSolver::new(&a, 1).unwrap();
        let y = solver.solve(&b, 2.0).unwrap();
        assert_eq!(y[1], 2.0);
        assert!(a.residual_inf(&y, &b) < 1e-14);
        // The difference of two solutions lies in the kernel (constants).
        assert!(((y[0] - x[0]) - (y[2] - x[2])).abs() < 1e-14);
    }
}
