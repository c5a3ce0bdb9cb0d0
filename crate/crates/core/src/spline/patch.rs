use serde::{Deserialize, Serialize};

use crate::scalar::Coefficient;

/// `d^r/du^r u^i` for `i = 0..=degree`, i.e. the (differentiated) monomial
/// basis vector `T_n`, `T'_n`, `T''_n`.
pub fn monomial_basis<T: Coefficient>(degree: usize, u: T, order: usize) -> Vec<T> {
    let mut out = vec![T::zero(); degree + 1];
    let mut power = T::one();
    for (k, slot) in out.iter_mut().enumerate().skip(order) {
        // k (k-1) ... (k-order+1) u^(k-order)
        *slot = T::int(falling_factorial(k, order)) * power;
        power = power * u;
    }
    out
}

pub(crate) fn falling_factorial(k: usize, r: usize) -> usize {
    if r > k {
        return 0;
    }
    ((k - r + 1)..=k).product()
}

/// Bivariate polynomial `P(u, w) = sum a_ij u^i w^j`, `0 <= i, j <= degree`.
/// Coefficients are row-major: row `i` is the power of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPatch<T> {
    pub degree: usize,
    pub coeffs: Vec<T>,
}

impl<T: Coefficient> PolyPatch<T> {
    pub fn zeros(degree: usize) -> Self {
        Self {
            degree,
            coeffs: vec![T::zero(); (degree + 1) * (degree + 1)],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), (degree + 1) * (degree + 1));
        Self { degree, coeffs }
    }

    pub fn with(degree: usize, terms: &[(usize, usize, T)]) -> Self {
        let mut p = Self::zeros(degree);
        for &(i, j, a) in terms {
            p.set(i, j, a);
        }
        p
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.coeffs[i * (self.degree + 1) + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.coeffs[i * (self.degree + 1) + j] = v;
    }

    /// `T_n(u)^t A X_n(w)`.
    pub fn evaluate(&self, u: T, w: T) -> T {
        self.partial(u, w, 0, 0)
    }

    /// `T^(ru)_n(u)^t A X^(rw)_n(w)`, the partial derivative of order
    /// `(ru, rw)` in the patch's own variables.
    pub fn partial(&self, u: T, w: T, ru: usize, rw: usize) -> T {
        let tu = monomial_basis(self.degree, u, ru);
        let xw = monomial_basis(self.degree, w, rw);
        bilinear(&tu, &self.coeffs, &xw)
    }
}

pub(crate) fn bilinear<T: Coefficient>(left: &[T], a: &[T], right: &[T]) -> T {
    let m = right.len();
    let mut acc = T::zero();
    for (i, &li) in left.iter().enumerate() {
        if li == T::zero() {
            continue;
        }
        let mut row = T::zero();
        for (j, &rj) in right.iter().enumerate() {
            row = row + a[i * m + j] * rj;
        }
        acc = acc + li * row;
    }
    acc
}

/// `G[i][k] = int_a^b (d^r u^i)(d^r u^k) du` for `i, k = 0..=degree`.
pub fn derivative_gram<T: Coefficient>(degree: usize, a: T, b: T, order: usize) -> Vec<T> {
    let n = degree + 1;
    // moments[m] = int_a^b u^m du
    let mut moments = Vec::with_capacity(2 * n);
    let (mut pa, mut pb) = (a, b);
    for m in 0..2 * n {
        moments.push((pb - pa) / T::int(m + 1));
        pa = pa * a;
        pb = pb * b;
    }
    let mut g = vec![T::zero(); n * n];
    for i in order..n {
        for k in order..n {
            let c = T::int(falling_factorial(i, order) * falling_factorial(k, order));
            g[i * n + k] = c * moments[i + k - 2 * order];
        }
    }
    g
}

/// Gram matrix of the squared Hessian norm over `[u0, u1] x [w0, w1]`:
/// `int (c_uu P_uu^2 + 2 c_uw P_uw^2 + c_ww P_ww^2)`, on the stacked
/// row-major coefficients of one patch. Exact for any coefficient ring.
pub fn hessian_gram<T: Coefficient>(degree: usize, u: (T, T), w: (T, T), c_uu: T, c_uw: T, c_ww: T) -> Vec<T> {
    let n = degree + 1;
    let gu: Vec<Vec<T>> = (0..3).map(|r| derivative_gram(degree, u.0, u.1, r)).collect();
    let gw: Vec<Vec<T>> = (0..3).map(|r| derivative_gram(degree, w.0, w.1, r)).collect();
    let two = T::int(2);
    let m = n * n;
    let mut h = vec![T::zero(); m * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = c_uu * gu[2][i * n + k] * gw[0][j * n + l]
                        + two * c_uw * gu[1][i * n + k] * gw[1][j * n + l]
                        + c_ww * gu[0][i * n + k] * gw[2][j * n + l];
                    h[(i * n + j) * m + (k * n + l)] = v;
                }
            }
        }
    }
    h
}
