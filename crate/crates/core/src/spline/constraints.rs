use nalgebra::DMatrix;

use super::patch::monomial_basis;
use super::{KnotGrid, Smoothness, SplineError};
use crate::scalar::Real;

/// Sparse homogeneous system `C c = 0` over the stacked patch coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem<T> {
    pub n_unknowns: usize,
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> ConstraintSystem<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_unknowns);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `max_r |(C c)_r|`.
    pub fn residual_max(&self, coeffs: &[T]) -> T {
        self.rows
            .iter()
            .map(|row| row.iter().fold(T::zero(), |acc, &(c, v)| acc + v * coeffs[c]).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Interface continuity equations for every pair of adjacent patches.
///
/// Across a vertical line at abscissa `t*` the rows are
/// `T^(r)_n(t*)^t (A - B) = 0` for `r = 0..=order`, one row per power of the
/// age variable; across a horizontal line at `x*` they are
/// `(A - B) X^(r)_n(x*) = 0`, one row per power of the duration variable.
/// Each block forces the two polynomials (and their normal derivatives) to
/// agree along the whole shared edge. Redundant rows are kept.
pub fn continuity_constraints<T: Real>(grid: &KnotGrid<T>, degree: usize, smoothness: Smoothness) -> Result<ConstraintSystem<T>, SplineError> {
    if degree == 0 || degree > super::MAX_DEGREE {
        return Err(SplineError::DegenerateGrid(format!("unsupported degree {degree}")));
    }
    let n = degree + 1;
    let m = n * n;
    let s = grid.scaling();
    let mut rows = Vec::new();

    // vertical lines: patches (k, l - 1) | (k, l)
    for l in 1..=grid.v() {
        let u = s.u(grid.t_knots[l - 1]);
        for k in 0..=grid.h() {
            let left = grid.cell_index(k, l - 1) * m;
            let right = grid.cell_index(k, l) * m;
            for r in 0..=smoothness.order() {
                let tb = monomial_basis(degree, u, r);
                for j in 0..n {
                    let mut row = Vec::with_capacity(2 * n);
                    for (i, &c) in tb.iter().enumerate() {
                        if c != T::zero() {
                            row.push((right + i * n + j, c));
                            row.push((left + i * n + j, -c));
                        }
                    }
                    rows.push(row);
                }
            }
        }
    }

    // horizontal lines: patches (k - 1, l) / (k, l)
    for k in 1..=grid.h() {
        let w = s.w(grid.x_knots[k - 1]);
        for l in 0..=grid.v() {
            let below = grid.cell_index(k - 1, l) * m;
            let above = grid.cell_index(k, l) * m;
            for r in 0..=smoothness.order() {
                let xb = monomial_basis(degree, w, r);
                for i in 0..n {
                    let mut row = Vec::with_capacity(2 * n);
                    for (j, &c) in xb.iter().enumerate() {
                        if c != T::zero() {
                            row.push((above + i * n + j, c));
                            row.push((below + i * n + j, -c));
                        }
                    }
                    rows.push(row);
                }
            }
        }
    }

    Ok(ConstraintSystem {
        n_unknowns: m * grid.n_cells(),
        rows,
    })
}
