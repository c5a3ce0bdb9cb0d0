//! Exact dense solve of the constrained fitting problem over any field,
//! written independently of the library's assembly and solver.
//!
//! Unknowns are the stacked row-major coefficients of each cell polynomial
//! in the unit-square variables `u = (t - t_lo) / (t_hi - t_lo)`,
//! `w = (x - x_lo) / (x_hi - x_lo)`; cells are ordered age band first.

#![allow(dead_code, clippy::needless_range_loop)]

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

pub struct Problem {
    pub domain: (f64, f64, f64, f64),
    pub t_knots: Vec<f64>,
    pub x_knots: Vec<f64>,
    pub degree: usize,
    /// Highest matched derivative order across interfaces (2 for C2).
    pub order: usize,
    /// (t, x, value, weight)
    pub points: Vec<(f64, f64, f64, f64)>,
}

pub fn q(v: f64) -> Q {
    Q::from_float(v).expect("finite")
}

fn int(v: usize) -> Q {
    Q::from_integer(v.into())
}

fn falling(i: usize, r: usize) -> usize {
    if r > i { 0 } else { ((i - r + 1)..=i).product() }
}

/// `d^r/du^r u^i` at `u`, for `i = 0..=n`.
fn basis(n: usize, u: &Q, r: usize) -> Vec<Q> {
    (0..=n)
        .map(|i| if i < r { Q::zero() } else { int(falling(i, r)) * pow(u, i - r) })
        .collect()
}

fn pow(u: &Q, e: usize) -> Q {
    let mut out = Q::one();
    for _ in 0..e {
        out = &out * u;
    }
    out
}

/// `int_a^b (d^r u^i)(d^r u^k) du`.
fn gram(n: usize, a: &Q, b: &Q, r: usize) -> Vec<Vec<Q>> {
    let mut g = vec![vec![Q::zero(); n + 1]; n + 1];
    for i in r..=n {
        for k in r..=n {
            let m = i + k - 2 * r;
            let moment = (pow(b, m + 1) - pow(a, m + 1)) / int(m + 1);
            g[i][k] = int(falling(i, r) * falling(k, r)) * moment;
        }
    }
    g
}

impl Problem {
    fn bands(lo: f64, hi: f64, knots: &[f64]) -> Vec<(f64, f64)> {
        let mut edges = vec![lo];
        edges.extend_from_slice(knots);
        edges.push(hi);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Exact minimizer of `alpha * sum w (P - v)^2 + (1 - alpha) * roughness`
    /// subject to continuity, roughness integrated in original units.
    pub fn solve(&self, alpha: f64) -> Vec<Q> {
        let n = self.degree;
        let m = (n + 1) * (n + 1);
        let (t_lo, t_hi, x_lo, x_hi) = self.domain;
        let (lt, lx) = (q(t_hi) - q(t_lo), q(x_hi) - q(x_lo));
        let u_of = |t: f64| (q(t) - q(t_lo)) / &lt;
        let w_of = |x: f64| (q(x) - q(x_lo)) / &lx;
        let tb = Self::bands(t_lo, t_hi, &self.t_knots);
        let xb = Self::bands(x_lo, x_hi, &self.x_knots);
        let (nt, nx) = (tb.len(), xb.len());
        let size = m * nt * nx;
        let cell = |k: usize, l: usize| k * nt + l;

        let mut h = vec![vec![Q::zero(); size]; size];
        let mut b = vec![Q::zero(); size];
        let (a, one_minus) = (q(alpha), Q::one() - q(alpha));

        for &(t, x, v, wt) in &self.points {
            if wt <= 0.0 {
                continue;
            }
            let l = self.t_knots.iter().filter(|&&k| k < t).count();
            let k = self.x_knots.iter().filter(|&&k| k < x).count();
            let off = cell(k, l) * m;
            let (bu, bw) = (basis(n, &u_of(t), 0), basis(n, &w_of(x), 0));
            let phi: Vec<Q> = (0..m).map(|p| &bu[p / (n + 1)] * &bw[p % (n + 1)]).collect();
            let aw = &a * q(wt);
            for p in 0..m {
                let s = &aw * &phi[p];
                b[off + p] += &s * q(v);
                for r in 0..m {
                    h[off + p][off + r] += &s * &phi[r];
                }
            }
        }

        // P_tt = P_uu / lt^2 etc., dt dx = lt lx du dw
        let c_uu = &one_minus * &lx / (&lt * &lt * &lt);
        let c_uw = &one_minus * int(2) / (&lt * &lx);
        let c_ww = &one_minus * &lt / (&lx * &lx * &lx);
        for (k, &(x0, x1)) in xb.iter().enumerate() {
            for (l, &(t0, t1)) in tb.iter().enumerate() {
                let (u0, u1, w0, w1) = (u_of(t0), u_of(t1), w_of(x0), w_of(x1));
                let gu: Vec<_> = (0..3).map(|r| gram(n, &u0, &u1, r)).collect();
                let gw: Vec<_> = (0..3).map(|r| gram(n, &w0, &w1, r)).collect();
                let off = cell(k, l) * m;
                for p in 0..m {
                    let (i, j) = (p / (n + 1), p % (n + 1));
                    for r in 0..m {
                        let (i2, j2) = (r / (n + 1), r % (n + 1));
                        h[off + p][off + r] += &c_uu * &gu[2][i][i2] * &gw[0][j][j2]
                            + &c_uw * &gu[1][i][i2] * &gw[1][j][j2]
                            + &c_ww * &gu[0][i][i2] * &gw[2][j][j2];
                    }
                }
            }
        }

        let mut rows: Vec<Vec<Q>> = Vec::new();
        for (li, &tk) in self.t_knots.iter().enumerate() {
            for k in 0..nx {
                let (lo, hi) = (cell(k, li) * m, cell(k, li + 1) * m);
                for r in 0..=self.order {
                    let d = basis(n, &u_of(tk), r);
                    for j in 0..=n {
                        let mut row = vec![Q::zero(); size];
                        for i in 0..=n {
                            row[hi + i * (n + 1) + j] += &d[i];
                            row[lo + i * (n + 1) + j] -= &d[i];
                        }
                        rows.push(row);
                    }
                }
            }
        }
        for (ki, &xk) in self.x_knots.iter().enumerate() {
            for l in 0..nt {
                let (lo, hi) = (cell(ki, l) * m, cell(ki + 1, l) * m);
                for r in 0..=self.order {
                    let d = basis(n, &w_of(xk), r);
                    for i in 0..=n {
                        let mut row = vec![Q::zero(); size];
                        for j in 0..=n {
                            row[hi + i * (n + 1) + j] += &d[j];
                            row[lo + i * (n + 1) + j] -= &d[j];
                        }
                        rows.push(row);
                    }
                }
            }
        }

        // c = Z y with Z an exact null-space basis; solve Z'HZ y = Z'b.
        let z = null_space(rows, size);
        let dim = z.len();
        let hz: Vec<Vec<Q>> = z
            .iter()
            .map(|zc| (0..size).map(|p| (0..size).filter(|&r| !zc[r].is_zero()).map(|r| &h[p][r] * &zc[r]).sum()).collect())
            .collect();
        let mut sys = vec![vec![Q::zero(); dim + 1]; dim];
        for i in 0..dim {
            for j in 0..dim {
                sys[i][j] = (0..size).filter(|&p| !z[i][p].is_zero()).map(|p| &z[i][p] * &hz[j][p]).sum();
            }
            sys[i][dim] = (0..size).filter(|&p| !z[i][p].is_zero()).map(|p| &z[i][p] * &b[p]).sum();
        }
        let y = solve_square(sys);
        (0..size).map(|p| (0..dim).map(|i| &z[i][p] * &y[i]).sum()).collect()
    }
}

/// Basis of `{c : rows c = 0}` from the reduced row echelon form.
pub fn null_space(mut rows: Vec<Vec<Q>>, n: usize) -> Vec<Vec<Q>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = Q::one() / &rows[r][col];
        for v in rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && !row[col].is_zero() {
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    if !pv.is_zero() {
                        *v -= &f * pv;
                    }
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    (0..n)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![Q::zero(); n];
            v[free] = Q::one();
            for (i, &pc) in pivots.iter().enumerate() {
                v[pc] = -rows[i][free].clone();
            }
            v
        })
        .collect()
}

/// Gauss-Jordan on an augmented non-singular system.
pub fn solve_square(mut a: Vec<Vec<Q>>) -> Vec<Q> {
    let n = a.len();
    for col in 0..n {
        let p = (col..n).max_by_key(|&i| !a[i][col].is_zero()).expect("rows");
        assert!(!a[p][col].is_zero(), "singular system");
        a.swap(col, p);
        let inv = Q::one() / &a[col][col];
        for v in a[col].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot = a[col].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&pivot) {
                    *v -= &f * pv;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n].clone()).collect()
}

/// `||a - b|| / ||b||` evaluated exactly, then rounded.
pub fn relative_distance(a: &[f64], b: &[Q]) -> f64 {
    let num: Q = a.iter().zip(b).map(|(x, y)| { let d = q(*x) - y; &d * &d }).sum();
    let den: Q = b.iter().map(|y| y * y).sum();
    let r = num / den;
    use num_traits::ToPrimitive;
    r.abs().to_f64().unwrap().sqrt()
}
