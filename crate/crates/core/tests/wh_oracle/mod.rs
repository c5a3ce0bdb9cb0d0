//! Dense normal-equation solve of the two-axis Whittaker-Henderson problem.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Forward-difference matrix of order `z` on `n` points, from the binomial
/// expansion of `(E - 1)^z`.
pub fn difference_matrix(n: usize, z: usize) -> DMatrix<f64> {
    let rows = n.saturating_sub(z);
    let mut d = DMatrix::zeros(rows, n);
    for r in 0..rows {
        let mut binom = 1.0;
        for k in 0..=z {
            let sign = if (z - k).is_multiple_of(2) { 1.0 } else { -1.0 };
            d[(r, r + k)] = sign * binom;
            binom = binom * (z - k) as f64 / (k + 1) as f64;
        }
    }
    d
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.view_mut((i * b.nrows(), j * b.ncols()), (b.nrows(), b.ncols())).copy_from(&(b * a[(i, j)]));
        }
    }
    out
}

/// Solves `(W + lx Dx'Dx + lt Dt'Dt) s = W q` on a row-major `n_x x n_t` grid.
pub fn solve(q: &[f64], w: &[f64], n_x: usize, n_t: usize, orders: (usize, usize), lambdas: (f64, f64)) -> Vec<f64> {
    let (zt, zx) = orders;
    let (lt, lx) = lambdas;
    let dt = kron(&DMatrix::identity(n_x, n_x), &difference_matrix(n_t, zt));
    let dx = kron(&difference_matrix(n_x, zx), &DMatrix::identity(n_t, n_t));
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let a = &wm + dt.transpose() * &dt * lt + dx.transpose() * &dx * lx;
    let rhs = &wm * DVector::from_column_slice(q);
    a.lu().solve(&rhs).expect("non-singular").as_slice().to_vec()
}
