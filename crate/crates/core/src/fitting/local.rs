//! Patch-local polynomial basis used by the solver.
//!
//! Patch coefficients are stored against monomials in the domain-wide unit
//! coordinates `(u, w)`. On a narrow cell those monomials are nearly
//! collinear, so the solver works with `u~ = (u - c_u) / s_u` and
//! `w~ = (w - c_w) / s_w`, which map each cell onto `[-1, 1]^2`, and
//! converts the result back exactly.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;
use crate::spline::{hessian_gram, monomial_basis, DataPoint, KnotGrid, QuadraticForm, Smoothness, SplineError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<T> {
    pub cu: T,
    pub su: T,
    pub cw: T,
    pub sw: T,
}

pub fn frames<T: Real>(grid: &KnotGrid<T>) -> Vec<Frame<T>> {
    let s = grid.scaling();
    let half = T::of(0.5);
    (0..grid.n_cells())
        .map(|idx| {
            let (k, l) = grid.cell_coords(idx);
            let (t0, t1) = grid.t_bounds(l);
            let (x0, x1) = grid.x_bounds(k);
            let (u0, u1) = (s.u(t0), s.u(t1));
            let (w0, w1) = (s.w(x0), s.w(x1));
            Frame {
                cu: (u0 + u1) * half,
                su: (u1 - u0) * half,
                cw: (w0 + w1) * half,
                sw: (w1 - w0) * half,
            }
        })
        .collect()
}

/// `M[p][i]` with `((u - c) / s)^i = sum_p M[p][i] u^p`.
fn shift_matrix<T: Real>(degree: usize, c: T, s: T) -> Vec<Vec<T>> {
    let n = degree + 1;
    let mut m = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        let inv = T::one() / s.powi(i as i32);
        let mut binom = T::one();
        for p in 0..=i {
            // binom = C(i, p)
            m[p][i] = binom * (-c).powi((i - p) as i32) * inv;
            binom = binom * T::int(i - p) / T::int(p + 1);
        }
    }
    m
}

/// Local coefficients of one patch to domain-wide coefficients.
pub fn to_global<T: Real>(frame: &Frame<T>, degree: usize, b: &[T]) -> Vec<T> {
    let n = degree + 1;
    let mu = shift_matrix(degree, frame.cu, frame.su);
    let mw = shift_matrix(degree, frame.cw, frame.sw);
    // a = Mu B Mw^t
    let mut tmp = vec![T::zero(); n * n];
    for p in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for i in p..n {
                acc += mu[p][i] * b[i * n + j];
            }
            tmp[p * n + j] = acc;
        }
    }
    let mut a = vec![T::zero(); n * n];
    for p in 0..n {
        for q in 0..n {
            let mut acc = T::zero();
            for j in q..n {
                acc += tmp[p * n + j] * mw[q][j];
            }
            a[p * n + q] = acc;
        }
    }
    a
}

pub fn fidelity<T: Real>(
    points: &[DataPoint<T>],
    grid: &KnotGrid<T>,
    degree: usize,
    frames: &[Frame<T>],
) -> Result<QuadraticForm<T>, SplineError> {
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
        let cell = grid.cell_index(k, l);
        let f = &frames[cell];
        let off = cell * m;
        let tu = monomial_basis(degree, (s.u(p.t) - f.cu) / f.su, 0);
        let xw = monomial_basis(degree, (s.w(p.x) - f.cw) / f.sw, 0);
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

pub fn roughness<T: Real>(
    grid: &KnotGrid<T>,
    degree: usize,
    frames: &[Frame<T>],
    lambda: Option<&[f64]>,
) -> Result<DMatrix<T>, SplineError> {
    let cells = grid.n_cells();
    if let Some(l) = lambda {
        if l.len() != cells {
            return Err(SplineError::Shape(format!("expected {cells} roughness weights, got {}", l.len())));
        }
        if let Some(&bad) = l.iter().find(|v| !(**v >= 0.0)) {
            return Err(SplineError::NegativeLambda(bad));
        }
    }
    let m = (degree + 1) * (degree + 1);
    let s = grid.scaling();
    let mut out = DMatrix::<T>::zeros(m * cells, m * cells);
    let unit = (-T::one(), T::one());
    for (idx, f) in frames.iter().enumerate() {
        let lam = T::of(lambda.map_or(1.0, |l| l[idx]));
        if lam == T::zero() {
            continue;
        }
        let lt = s.t_scale * f.su;
        let lx = s.x_scale * f.sw;
        let g = hessian_gram(
            degree,
            unit,
            unit,
            lam * lx / (lt * lt * lt),
            lam / (lt * lx),
            lam * lt / (lx * lx * lx),
        );
        let off = idx * m;
        for a in 0..m {
            for c in 0..m {
                out[(off + a, off + c)] = g[a * m + c];
            }
        }
    }
    Ok(out)
}

/// Continuity rows in local coefficients, each scaled to unit max-norm.
pub fn constraints<T: Real>(grid: &KnotGrid<T>, degree: usize, smoothness: Smoothness, frames: &[Frame<T>]) -> DMatrix<T> {
    let n = degree + 1;
    let m = n * n;
    let mut rows: Vec<Vec<(usize, T)>> = Vec::new();
    let plus = monomial_basis_orders(degree, T::one(), smoothness.order());
    let minus = monomial_basis_orders(degree, -T::one(), smoothness.order());

    for l in 1..=grid.v() {
        for k in 0..=grid.h() {
            let (left, right) = (grid.cell_index(k, l - 1), grid.cell_index(k, l));
            let (sl, sr) = (frames[left].su, frames[right].su);
            for r in 0..=smoothness.order() {
                let (fl, fr) = (sl.powi(r as i32), sr.powi(r as i32));
                for j in 0..n {
                    let mut row = Vec::with_capacity(2 * n);
                    for i in 0..n {
                        row.push((right * m + i * n + j, minus[r][i] / fr));
                        row.push((left * m + i * n + j, -plus[r][i] / fl));
                    }
                    rows.push(row);
                }
            }
        }
    }
    for k in 1..=grid.h() {
        for l in 0..=grid.v() {
            let (below, above) = (grid.cell_index(k - 1, l), grid.cell_index(k, l));
            let (sb, sa) = (frames[below].sw, frames[above].sw);
            for r in 0..=smoothness.order() {
                let (fb, fa) = (sb.powi(r as i32), sa.powi(r as i32));
                for i in 0..n {
                    let mut row = Vec::with_capacity(2 * n);
                    for j in 0..n {
                        row.push((above * m + i * n + j, minus[r][j] / fa));
                        row.push((below * m + i * n + j, -plus[r][j] / fb));
                    }
                    rows.push(row);
                }
            }
        }
    }
    let mut c = DMatrix::<T>::zeros(rows.len(), m * grid.n_cells());
    for (ri, row) in rows.iter().enumerate() {
        let scale = row.iter().fold(T::zero(), |a, (_, v)| a.max(v.abs()));
        for &(col, v) in row {
            if scale > T::zero() {
                c[(ri, col)] += v / scale;
            }
        }
    }
    c
}

fn monomial_basis_orders<T: Real>(degree: usize, u: T, max_order: usize) -> Vec<Vec<T>> {
    (0..=max_order).map(|r| monomial_basis(degree, u, r)).collect()
}
