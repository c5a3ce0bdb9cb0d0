use serde::{Deserialize, Serialize};

use super::SplineError;
use crate::scalar::Real;

/// Rectangle `[t_lo, t_hi] x [x_lo, x_hi]` (duration in days x entry age).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain<T> {
    pub t_lo: T,
    pub t_hi: T,
    pub x_lo: T,
    pub x_hi: T,
}

impl<T: Real> Domain<T> {
    pub fn new(t_lo: T, t_hi: T, x_lo: T, x_hi: T) -> Self {
        Self { t_lo, t_hi, x_lo, x_hi }
    }

    pub fn contains(&self, t: T, x: T) -> bool {
        t >= self.t_lo && t <= self.t_hi && x >= self.x_lo && x <= self.x_hi
    }
}

/// Affine maps `u = (t - t_offset) / t_scale`, `w = (x - x_offset) / x_scale`
/// sending the domain onto the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScaling<T> {
    pub t_offset: T,
    pub t_scale: T,
    pub x_offset: T,
    pub x_scale: T,
}

impl<T: Real> AxisScaling<T> {
    pub fn of(domain: &Domain<T>) -> Self {
        Self {
            t_offset: domain.t_lo,
            t_scale: domain.t_hi - domain.t_lo,
            x_offset: domain.x_lo,
            x_scale: domain.x_hi - domain.x_lo,
        }
    }

    pub fn u(&self, t: T) -> T {
        (t - self.t_offset) / self.t_scale
    }

    pub fn w(&self, x: T) -> T {
        (x - self.x_offset) / self.x_scale
    }
}

/// Interior knot lines over a rectangular domain.
///
/// `t_knots` are the `v` vertical lines (fixed duration), `x_knots` the `h`
/// horizontal lines (fixed age). Cell `(k, l)` is the `k`-th age band and
/// the `l`-th duration band; points on a knot line belong to the lower
/// band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid<T> {
    pub domain: Domain<T>,
    pub t_knots: Vec<T>,
    pub x_knots: Vec<T>,
}

impl<T: Real> KnotGrid<T> {
    pub fn new(domain: Domain<T>, t_knots: Vec<T>, x_knots: Vec<T>) -> Result<Self, SplineError> {
        let finite = |v: T| v.as_f64().is_finite();
        if ![domain.t_lo, domain.t_hi, domain.x_lo, domain.x_hi].into_iter().all(finite)
            || domain.t_hi <= domain.t_lo
            || domain.x_hi <= domain.x_lo
        {
            return Err(SplineError::DegenerateGrid("domain must have positive extent on both axes".into()));
        }
        check_lines(&t_knots, domain.t_lo, domain.t_hi, "vertical")?;
        check_lines(&x_knots, domain.x_lo, domain.x_hi, "horizontal")?;
        Ok(Self { domain, t_knots, x_knots })
    }

    pub fn single(domain: Domain<T>) -> Result<Self, SplineError> {
        Self::new(domain, Vec::new(), Vec::new())
    }

    /// Number of horizontal lines.
    pub fn h(&self) -> usize {
        self.x_knots.len()
    }

    /// Number of vertical lines.
    pub fn v(&self) -> usize {
        self.t_knots.len()
    }

    pub fn n_cells(&self) -> usize {
        (self.h() + 1) * (self.v() + 1)
    }

    pub fn cell_index(&self, k: usize, l: usize) -> usize {
        k * (self.v() + 1) + l
    }

    pub fn cell_coords(&self, index: usize) -> (usize, usize) {
        (index / (self.v() + 1), index % (self.v() + 1))
    }

    /// Cell containing `(t, x)`; outside points go to the nearest edge cell.
    pub fn locate(&self, t: T, x: T) -> (usize, usize) {
        let l = self.t_knots.partition_point(|&k| k < t);
        let k = self.x_knots.partition_point(|&k| k < x);
        (k, l)
    }

    pub fn t_bounds(&self, l: usize) -> (T, T) {
        let lo = if l == 0 { self.domain.t_lo } else { self.t_knots[l - 1] };
        let hi = if l == self.v() { self.domain.t_hi } else { self.t_knots[l] };
        (lo, hi)
    }

    pub fn x_bounds(&self, k: usize) -> (T, T) {
        let lo = if k == 0 { self.domain.x_lo } else { self.x_knots[k - 1] };
        let hi = if k == self.h() { self.domain.x_hi } else { self.x_knots[k] };
        (lo, hi)
    }

    pub fn scaling(&self) -> AxisScaling<T> {
        AxisScaling::of(&self.domain)
    }
}

fn check_lines<T: Real>(lines: &[T], lo: T, hi: T, which: &str) -> Result<(), SplineError> {
    for (i, &k) in lines.iter().enumerate() {
        if !(k > lo && k < hi) {
            return Err(SplineError::InvalidKnots(format!("{which} line {} is not strictly inside the domain", k.as_f64())));
        }
        if i > 0 && lines[i - 1] >= k {
            return Err(SplineError::InvalidKnots(format!("{which} lines must be strictly increasing")));
        }
    }
    Ok(())
}
