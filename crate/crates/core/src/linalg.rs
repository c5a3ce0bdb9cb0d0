//! Dense and banded linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Orthonormal basis of `ker C` from a singular value decomposition, with the
/// range factors kept to recover Lagrange multipliers.
#[derive(Debug, Clone)]
pub struct NullSpace<T: Real> {
    /// `n x (n - rank)`, orthonormal columns.
    pub basis: DMatrix<T>,
    pub rank: usize,
    pub singular_values: Vec<T>,
    left: DMatrix<T>,
    right: DMatrix<T>,
}

impl<T: Real> NullSpace<T> {
    /// Rows whose singular value falls below `rel_tol * sigma_max` are
    /// treated as redundant.
    pub fn of(c: &DMatrix<T>, rel_tol: T) -> Self {
        let (m, n) = c.shape();
        if m == 0 {
            return Self {
                basis: DMatrix::identity(n, n),
                rank: 0,
                singular_values: Vec::new(),
                left: DMatrix::zeros(0, 0),
                right: DMatrix::zeros(n, 0),
            };
        }
        // Pad with zero rows so V^t is square and spans all of R^n.
        let rows = m.max(n);
        let mut a = DMatrix::zeros(rows, n);
        a.view_mut((0, 0), (m, n)).copy_from(c);
        let svd = a.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let sv = svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).expect("finite singular values"));
        let smax = sv[order[0]];
        let tol = rel_tol * smax;
        let rank = order.iter().filter(|&&i| sv[i] > tol && sv[i] > T::zero()).count();

        let mut basis = DMatrix::zeros(n, n - rank);
        for (col, &i) in order[rank..].iter().enumerate() {
            basis.set_column(col, &vt.row(i).transpose());
        }
        let mut left = DMatrix::zeros(m, rank);
        let mut right = DMatrix::zeros(n, rank);
        for (col, &i) in order[..rank].iter().enumerate() {
            left.set_column(col, &u.column(i).rows(0, m));
            right.set_column(col, &vt.row(i).transpose());
        }
        Self {
            basis,
            rank,
            singular_values: order.iter().map(|&i| sv[i]).collect(),
            left,
            right,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Minimum-norm least-squares solution of `C^t mu = g`.
    pub fn multipliers(&self, g: &DVector<T>) -> DVector<T> {
        let mut proj = self.right.transpose() * g;
        for (i, p) in proj.iter_mut().enumerate() {
            *p /= self.singular_values[i];
        }
        &self.left * proj
    }
}

/// Symmetric positive-definite matrix in lower band storage.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSpd<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bw: bandwidth,
            data: vec![T::zero(); n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to entry `(i, j)` and its mirror.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside the band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-band Cholesky `A = L L^t`. Fails with the offending row when a
    /// pivot drops below `rel_tol` times the largest diagonal entry.
    pub fn cholesky(&self, rel_tol: T) -> Result<BandedCholesky<T>, usize> {
        let n = self.n;
        let bw = self.bw;
        let max_diag = (0..n).map(|i| self.get(i, i)).fold(T::zero(), |a, b| a.max(b));
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (i - j);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[idx(j, j)];
            for k in lo..j {
                d -= l[idx(j, k)] * l[idx(j, k)];
            }
            if !(d > rel_tol * max_diag) || max_diag <= T::zero() {
                return Err(j);
            }
            let d = d.sqrt();
            l[idx(j, j)] = d;
            for i in (j + 1)..n.min(j + bw + 1) {
                let lo_i = i.saturating_sub(bw);
                let mut s = l[idx(i, j)];
                for k in lo_i.max(lo)..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                l[idx(i, j)] = s / d;
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let (n, bw) = (self.n, self.bw);
        let idx = |i: usize, j: usize| i * (bw + 1) + (i - j);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[idx(i, k)] * y[k];
            }
            y[i] = s / self.l[idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.l[idx(k, i)] * y[k];
            }
            y[i] = s / self.l[idx(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_redundant_rows() {
        // rows: x0 - x1, x1 - x2, x0 - x2 (redundant)
        let c = DMatrix::<f64>::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, -1.0]);
        let ns = NullSpace::of(&c, 1e-10);
        assert_eq!(ns.rank, 2);
        assert_eq!(ns.dim(), 1);
        let z = ns.basis.column(0);
        assert!((&c * z).norm() < 1e-14);
        assert!((z.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wide_matrix_gets_full_null_space() {
        let c = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let ns = NullSpace::of(&c, 1e-10);
        assert_eq!(ns.dim(), 3);
        assert!((&c * &ns.basis).norm() < 1e-14);
        let gram = ns.basis.transpose() * &ns.basis;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn multipliers_solve_range_equations() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
        let ns = NullSpace::of(&c, 1e-12);
        let mu_true = DVector::from_vec(vec![0.5, -1.5]);
        let g = c.transpose() * &mu_true;
        let mu = ns.multipliers(&g);
        assert!((mu - mu_true).norm() < 1e-14);
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        let n = 12;
        let bw = 3;
        let mut a = BandedSpd::<f64>::zeros(n, bw);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = if i == j { 10.0 + i as f64 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                a.add(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.cholesky(1e-14).unwrap().solve(&rhs);
        let x_ref = dense.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - x_ref[i]).abs() < 1e-13);
        }
        let back = a.mul_vec(&x);
        for i in 0..n {
            assert!((back[i] - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_band_is_detected() {
        let mut a = BandedSpd::<f64>::zeros(3, 1);
        for (i, j, v) in [(0, 0, 1.0), (1, 0, -1.0), (1, 1, 1.0), (2, 2, 1.0)] {
            a.add(i, j, v);
        }
        assert_eq!(a.cholesky(1e-12).unwrap_err(), 1);
    }
}
