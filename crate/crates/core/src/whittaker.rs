//! Two-dimensional Whittaker-Henderson graduation.
//!
//! Minimizes `sum w (s - q)^2 + lambda_t sum (D_t^z s)^2 + lambda_x sum (D_x^z s)^2`
//! over grid values `s`. The normal equations are banded and solved by an
//! in-band Cholesky factorization with the shorter axis varying fastest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::BandedSpd;
use crate::rates::RateGrid;
use crate::scalar::Real;
use crate::survival::RawRateSurface;

#[derive(Debug, Error, PartialEq)]
pub enum WhError {
    #[error("invalid smoothing configuration: {0}")]
    Config(String),
    #[error("singular system at grid value {index}: the data weights do not pin the penalty null space")]
    Singular { index: usize },
    #[error("grid shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WhConfig {
    pub order_t: usize,
    pub order_x: usize,
    pub lambda_t: f64,
    pub lambda_x: f64,
}

impl Default for WhConfig {
    fn default() -> Self {
        Self {
            order_t: 2,
            order_x: 2,
            lambda_t: 10.0,
            lambda_x: 10.0,
        }
    }
}

impl WhConfig {
    pub fn validate(&self) -> Result<(), WhError> {
        if self.order_t == 0 || self.order_x == 0 {
            return Err(WhError::Config("difference orders must be at least 1".into()));
        }
        for l in [self.lambda_t, self.lambda_x] {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(WhError::Config(format!("smoothing weights must be finite and non-negative, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhOutcome {
    pub grid: RateGrid,
    /// `|A s - r|_inf / (1 + |r|_inf)` of the normal equations.
    pub residual: f64,
}

/// Smooths a raw surface. Data weights are the fitting weights rescaled to
/// mean one over observed cells; masked cells get weight zero.
pub fn wh2d_smooth(raw: &RawRateSurface, config: &WhConfig) -> Result<WhOutcome, WhError> {
    let observed = raw.unmasked_count().max(1) as f64;
    let weights: Vec<f64> = raw.weight.iter().map(|w| w * observed).collect();
    let (values, residual) = wh2d_solve(&raw.q, &weights, raw.n_ages, raw.n_days, config)?;
    Ok(WhOutcome {
        grid: RateGrid::new(raw.age_min, raw.n_ages, raw.day_min, raw.n_days, values),
        residual,
    })
}

/// Generic solver on a row-major `n_x x n_t` grid (`x` slow, `t` fast).
pub fn wh2d_solve<T: Real>(
    q: &[T],
    w: &[T],
    n_x: usize,
    n_t: usize,
    config: &WhConfig,
) -> Result<(Vec<T>, T), WhError> {
    config.validate()?;
    let len = n_x * n_t;
    if q.len() != len || w.len() != len || len == 0 {
        return Err(WhError::Shape(format!("expected {len} values and weights, got {} and {}", q.len(), w.len())));
    }
    // Unknown ordering: the shorter axis varies fastest to keep the band narrow.
    let x_fast = n_x <= n_t;
    let pos = |x: usize, t: usize| if x_fast { t * n_x + x } else { x * n_t + t };
    let (stride_x, stride_t) = if x_fast { (1, n_x) } else { (n_t, 1) };
    let bw_x = if config.order_x < n_x { config.order_x * stride_x } else { 0 };
    let bw_t = if config.order_t < n_t { config.order_t * stride_t } else { 0 };
    let mut a = BandedSpd::<T>::zeros(len, bw_x.max(bw_t));
    let mut rhs = vec![T::zero(); len];
    for x in 0..n_x {
        for t in 0..n_t {
            let src = x * n_t + t;
            let p = pos(x, t);
            a.add(p, p, w[src]);
            rhs[p] = w[src] * q[src];
        }
    }
    let add_penalty = |a: &mut BandedSpd<T>, lambda: f64, order: usize, n_along: usize, n_across: usize, along_x: bool| {
        if lambda == 0.0 || order >= n_along {
            return;
        }
        let c = difference_coefficients(order);
        let lam = T::of(lambda);
        for across in 0..n_across {
            for r in 0..(n_along - order) {
                for (k1, &c1) in c.iter().enumerate() {
                    for (k2, &c2) in c.iter().enumerate().skip(k1) {
                        let (p1, p2) = if along_x {
                            (pos(r + k1, across), pos(r + k2, across))
                        } else {
                            (pos(across, r + k1), pos(across, r + k2))
                        };
                        let v = lam * T::of(c1 * c2);
                        a.add(p1, p2, v);
                        if k1 != k2 && p1 == p2 {
                            a.add(p1, p2, v);
                        }
                    }
                }
            }
        }
    };
    add_penalty(&mut a, config.lambda_x, config.order_x, n_x, n_t, true);
    add_penalty(&mut a, config.lambda_t, config.order_t, n_t, n_x, false);

    let tol = T::default_epsilon() * T::of(len as f64);
    let chol = a.cholesky(tol).map_err(|index| WhError::Singular { index })?;
    let mut s = chol.solve(&rhs);
    // Refinement with the residual evaluated from the difference operators
    // rather than the assembled band, which loses the data weights next to
    // large smoothing weights.
    let rhs_norm = rhs.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut residual = T::zero();
    for _ in 0..4 {
        let mut grid = vec![T::zero(); len];
        for x in 0..n_x {
            for t in 0..n_t {
                grid[x * n_t + t] = s[pos(x, t)];
            }
        }
        let pen = penalty_apply(&grid, n_x, n_t, config);
        let mut r = vec![T::zero(); len];
        for x in 0..n_x {
            for t in 0..n_t {
                let src = x * n_t + t;
                r[pos(x, t)] = w[src] * (q[src] - grid[src]) - pen[src];
            }
        }
        residual = r.iter().fold(T::zero(), |m, v| m.max(v.abs())) / (T::one() + rhs_norm);
        let ds = chol.solve(&r);
        for (si, di) in s.iter_mut().zip(ds) {
            *si += di;
        }
        if residual < T::default_epsilon() {
            break;
        }
    }
    let mut out = vec![T::zero(); len];
    for x in 0..n_x {
        for t in 0..n_t {
            out[x * n_t + t] = s[pos(x, t)];
        }
    }
    Ok((out, residual))
}

/// `lambda_x D_x^t D_x s + lambda_t D_t^t D_t s` on a row-major grid.
pub fn penalty_apply<T: Real>(s: &[T], n_x: usize, n_t: usize, config: &WhConfig) -> Vec<T> {
    let mut out = vec![T::zero(); s.len()];
    let mut axis = |lambda: f64, order: usize, n_along: usize, n_across: usize, idx: &dyn Fn(usize, usize) -> usize| {
        if lambda == 0.0 || order >= n_along {
            return;
        }
        let c: Vec<T> = difference_coefficients(order).into_iter().map(T::of).collect();
        let lam = T::of(lambda);
        for across in 0..n_across {
            for r in 0..(n_along - order) {
                let d = c.iter().enumerate().fold(T::zero(), |acc, (k, &ck)| acc + ck * s[idx(r + k, across)]);
                for (k, &ck) in c.iter().enumerate() {
                    out[idx(r + k, across)] += lam * ck * d;
                }
            }
        }
    };
    axis(config.lambda_x, config.order_x, n_x, n_t, &|x, t| x * n_t + t);
    axis(config.lambda_t, config.order_t, n_t, n_x, &|t, x| x * n_t + t);
    out
}

/// Coefficients of the forward difference of order `z`:
/// `(-1)^(z-k) binom(z, k)`.
pub fn difference_coefficients(z: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..z {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &v) in c.iter().enumerate() {
            next[i] -= v;
            next[i + 1] += v;
        }
        c = next;
    }
    c
}
