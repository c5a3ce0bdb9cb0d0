use nalgebra::{DMatrix, DVector};

use super::patch::{hessian_gram, monomial_basis};
use super::{KnotGrid, SplineError};
use crate::scalar::Real;
use crate::survival::RawRateSurface;

/// `f(c) = c^t H c - 2 b^t c + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm<T: Real> {
    pub h: DMatrix<T>,
    pub b: DVector<T>,
    pub constant: T,
}

impl<T: Real> QuadraticForm<T> {
    pub fn value(&self, c: &DVector<T>) -> T {
        (c.transpose() * &self.h * c)[(0, 0)] - (self.b.dot(c) + self.b.dot(c)) + self.constant
    }
}

/// Weighted observation at duration `t`, entry age `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint<T> {
    pub t: T,
    pub x: T,
    pub value: T,
    pub weight: T,
}

/// Unmasked cells of a raw surface as data points (t = day, x = age).
pub fn raw_points<T: Real>(raw: &RawRateSurface, stride: usize) -> Vec<DataPoint<T>> {
    let stride = stride.max(1);
    (0..raw.len())
        .filter(|&i| !raw.masked[i] && raw.weight[i] > 0.0)
        .filter(|&i| ((raw.coords(i).1 - raw.day_min) as usize).is_multiple_of(stride))
        .map(|i| {
            let (age, day) = raw.coords(i);
            DataPoint {
                t: T::of(day as f64),
                x: T::of(age as f64),
                value: T::of(raw.q[i]),
                weight: T::of(raw.weight[i]),
            }
        })
        .collect()
}

/// Expands `sum w (P(t, x) - q)^2` into a quadratic form in the stacked
/// coefficients. Each point is assigned to exactly one cell.
pub fn fidelity_form_points<T: Real>(points: &[DataPoint<T>], grid: &KnotGrid<T>, degree: usize) -> Result<QuadraticForm<T>, SplineError> {
    let n = degree + 1;
    let m = n * n;
    let size = m * grid.n_cells();
    let s = grid.scaling();
    let mut h = DMatrix::<T>::zeros(size, size);
    let mut b = DVector::<T>::zeros(size);
    let mut constant = T::zero();
    let mut used = 0usize;
    let mut phi = vec![T::zero(); m];

    for p in points {
        if p.weight <= T::zero() {
            continue;
        }
        if !grid.domain.contains(p.t, p.x) {
            return Err(SplineError::PointOutsideDomain {
                t: p.t.as_f64(),
                x: p.x.as_f64(),
            });
        }
        used += 1;
        let (k, l) = grid.locate(p.t, p.x);
        let off = grid.cell_index(k, l) * m;
        let tu = monomial_basis(degree, s.u(p.t), 0);
        let xw = monomial_basis(degree, s.w(p.x), 0);
        for i in 0..n {
            for j in 0..n {
                phi[i * n + j] = tu[i] * xw[j];
            }
        }
        for a in 0..m {
            let wa = p.weight * phi[a];
            b[off + a] += wa * p.value;
            for c in a..m {
                h[(off + a, off + c)] += wa * phi[c];
            }
        }
        constant += p.weight * p.value * p.value;
    }
    if used == 0 {
        return Err(SplineError::NoData);
    }
    for a in 0..size {
        for c in (a + 1)..size {
            h[(c, a)] = h[(a, c)];
        }
    }
    Ok(QuadraticForm { h, b, constant })
}

/// Fidelity form of all unmasked cells of a raw surface.
pub fn fidelity_form<T: Real>(raw: &RawRateSurface, grid: &KnotGrid<T>, degree: usize) -> Result<QuadraticForm<T>, SplineError> {
    fidelity_form_points(&raw_points(raw, 1), grid, degree)
}

/// Exact roughness `sum_cells lambda int (P_tt^2 + 2 P_tx^2 + P_xx^2) dt dx`
/// in original units, as a block-diagonal PSD matrix `H` with
/// `roughness(c) = c^t H c`. `lambda` holds one weight per cell (default 1).
pub fn roughness_form<T: Real>(grid: &KnotGrid<T>, degree: usize, lambda: Option<&[f64]>) -> Result<DMatrix<T>, SplineError> {
    let cells = grid.n_cells();
    if let Some(l) = lambda {
        if l.len() != cells {
            return Err(SplineError::Shape(format!("expected {cells} roughness weights, got {}", l.len())));
        }
        if let Some(&bad) = l.iter().find(|v| !(**v >= 0.0)) {
            return Err(SplineError::NegativeLambda(bad));
        }
    }
    let n = degree + 1;
    let m = n * n;
    let s = grid.scaling();
    let (lt, lx) = (s.t_scale, s.x_scale);
    let mut out = DMatrix::<T>::zeros(m * cells, m * cells);
    for idx in 0..cells {
        let lam = T::of(lambda.map_or(1.0, |l| l[idx]));
        if lam == T::zero() {
            continue;
        }
        let (k, l) = grid.cell_coords(idx);
        let (t0, t1) = grid.t_bounds(l);
        let (x0, x1) = grid.x_bounds(k);
        let c_uu = lam * lx / (lt * lt * lt);
        let c_uw = lam / (lt * lx);
        let c_ww = lam * lt / (lx * lx * lx);
        let g = hessian_gram(degree, (s.u(t0), s.u(t1)), (s.w(x0), s.w(x1)), c_uu, c_uw, c_ww);
        let off = idx * m;
        for a in 0..m {
            for c in 0..m {
                out[(off + a, off + c)] = g[a * m + c];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{Domain, PiecewiseSurface, PolyPatch, Smoothness};

    #[test]
    fn single_point_constant_surface() {
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 2.0, 0.0, 2.0)).unwrap();
        let pts = [DataPoint { t: 1.0, x: 1.0, value: 0.0, weight: 1.0 }];
        let f = fidelity_form_points(&pts, &grid, 3).unwrap();
        let mut c = DVector::zeros(16);
        c[0] = 0.8;
        assert!((f.value(&c) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn all_masked_is_an_error() {
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 2.0, 0.0, 2.0)).unwrap();
        let pts = [DataPoint { t: 1.0, x: 1.0, value: 0.5, weight: 0.0 }];
        assert_eq!(fidelity_form_points(&pts, &grid, 3), Err(SplineError::NoData));
    }

    #[test]
    fn outside_point_is_an_error() {
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 2.0, 0.0, 2.0)).unwrap();
        let pts = [DataPoint { t: 3.0, x: 1.0, value: 0.5, weight: 1.0 }];
        assert!(matches!(fidelity_form_points(&pts, &grid, 3), Err(SplineError::PointOutsideDomain { .. })));
    }

    #[test]
    fn square_monomial_on_unit_square() {
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let h = roughness_form(&grid, 3, None).unwrap();
        let s = PiecewiseSurface::new(grid, 3, Smoothness::C2, vec![PolyPatch::with(3, &[(2, 0, 1.0)])]).unwrap();
        let c = DVector::from_vec(s.coefficients());
        assert!(((c.transpose() * &h * &c)[(0, 0)] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn affine_patch_has_zero_roughness() {
        let grid = KnotGrid::<f64>::new(Domain::new(1.0, 1095.0, 25.0, 60.0), vec![200.0], vec![]).unwrap();
        let h = roughness_form(&grid, 3, None).unwrap();
        let mut c = DVector::zeros(32);
        for off in [0, 16] {
            c[off] = 0.3;
            c[off + 4] = -0.2; // u
            c[off + 1] = 0.1; // w
        }
        assert!((c.transpose() * &h * &c)[(0, 0)].abs() < 1e-18);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(roughness_form(&grid, 3, Some(&[-1.0])), Err(SplineError::NegativeLambda(-1.0)));
    }
}
