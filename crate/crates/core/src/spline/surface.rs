use serde::{Deserialize, Serialize};

use super::{AxisScaling, Domain, KnotGrid, PolyPatch, Smoothness, SplineError};
use crate::rates::DailyRates;
use crate::scalar::Real;

/// C1/C2 piecewise-polynomial surface over a knot grid.
///
/// Patch coefficients are expressed in the rescaled unit-square variables
/// `(u, w)` of [`AxisScaling`]; every public accessor takes and returns
/// quantities in the original (day, age) units.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSurface<T> {
    grid: KnotGrid<T>,
    scaling: AxisScaling<T>,
    degree: usize,
    smoothness: Smoothness,
    patches: Vec<PolyPatch<T>>,
}

impl<T: Real> PiecewiseSurface<T> {
    pub fn new(grid: KnotGrid<T>, degree: usize, smoothness: Smoothness, patches: Vec<PolyPatch<T>>) -> Result<Self, SplineError> {
        if patches.len() != grid.n_cells() {
            return Err(SplineError::Shape(format!("expected {} patches, got {}", grid.n_cells(), patches.len())));
        }
        if patches.iter().any(|p| p.degree != degree || p.coeffs.len() != (degree + 1) * (degree + 1)) {
            return Err(SplineError::Shape("patch degree mismatch".into()));
        }
        let scaling = grid.scaling();
        Ok(Self {
            grid,
            scaling,
            degree,
            smoothness,
            patches,
        })
    }

    /// Splits a stacked coefficient vector (patch-major, row-major within a
    /// patch) into patches.
    pub fn from_coefficients(grid: KnotGrid<T>, degree: usize, smoothness: Smoothness, coeffs: &[T]) -> Result<Self, SplineError> {
        let m = (degree + 1) * (degree + 1);
        if coeffs.len() != m * grid.n_cells() {
            return Err(SplineError::Shape(format!("expected {} coefficients, got {}", m * grid.n_cells(), coeffs.len())));
        }
        let patches = coeffs.chunks(m).map(|c| PolyPatch::from_coeffs(degree, c.to_vec())).collect();
        Self::new(grid, degree, smoothness, patches)
    }

    pub fn coefficients(&self) -> Vec<T> {
        self.patches.iter().flat_map(|p| p.coeffs.iter().copied()).collect()
    }

    pub fn grid(&self) -> &KnotGrid<T> {
        &self.grid
    }

    pub fn scaling(&self) -> &AxisScaling<T> {
        &self.scaling
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn patches(&self) -> &[PolyPatch<T>] {
        &self.patches
    }

    pub fn patch(&self, k: usize, l: usize) -> &PolyPatch<T> {
        &self.patches[self.grid.cell_index(k, l)]
    }

    pub fn is_extrapolation(&self, t: T, x: T) -> bool {
        !self.grid.domain.contains(t, x)
    }

    pub fn evaluate(&self, t: T, x: T) -> T {
        let (k, l) = self.grid.locate(t, x);
        self.patch_partial_unchecked(k, l, t, x, 0, 0)
    }

    /// Value plus extrapolation flag.
    pub fn evaluate_flagged(&self, t: T, x: T) -> (T, bool) {
        (self.evaluate(t, x), self.is_extrapolation(t, x))
    }

    /// Partial derivative `d^(ot+ox) P / dt^ot dx^ox` in original units,
    /// `ot + ox <= 2`.
    pub fn partial(&self, t: T, x: T, order_t: usize, order_x: usize) -> Result<T, SplineError> {
        let (k, l) = self.grid.locate(t, x);
        self.patch_partial(k, l, t, x, order_t, order_x)
    }

    /// Same as [`partial`](Self::partial) but evaluated with the polynomial
    /// of a given cell, wherever `(t, x)` lies.
    pub fn patch_partial(&self, k: usize, l: usize, t: T, x: T, order_t: usize, order_x: usize) -> Result<T, SplineError> {
        if order_t + order_x > 2 {
            return Err(SplineError::UnsupportedOrder(order_t, order_x));
        }
        Ok(self.patch_partial_unchecked(k, l, t, x, order_t, order_x))
    }

    fn patch_partial_unchecked(&self, k: usize, l: usize, t: T, x: T, ot: usize, ox: usize) -> T {
        let s = &self.scaling;
        let raw = self.patch(k, l).partial(s.u(t), s.w(x), ot, ox);
        raw / (s.t_scale.powi(ot as i32) * s.x_scale.powi(ox as i32))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SurfaceFile::from(self)).expect("surface serializes")
    }
}

impl PiecewiseSurface<f64> {
    pub fn from_json(text: &str) -> Result<Self, SplineError> {
        let file: SurfaceFile<f64> = serde_json::from_str(text).map_err(|e| SplineError::Format(e.to_string()))?;
        file.try_into()
    }
}

impl<T: Real> DailyRates for PiecewiseSurface<T> {
    fn daily_rate(&self, age: f64, day: f64) -> f64 {
        self.evaluate(T::of(day), T::of(age)).as_f64()
    }

    fn is_extrapolation(&self, age: f64, day: f64) -> bool {
        PiecewiseSurface::is_extrapolation(self, T::of(day), T::of(age))
    }
}

/// On-disk layout of a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFile<T> {
    pub domain: Domain<T>,
    pub t_knots: Vec<T>,
    pub x_knots: Vec<T>,
    pub degree: usize,
    pub smoothness: Smoothness,
    pub scaling: AxisScaling<T>,
    pub patches: Vec<PatchFile<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFile<T> {
    pub k: usize,
    pub l: usize,
    /// Row `i` holds the coefficients of `u^i w^0 .. u^i w^n`.
    pub coefficients: Vec<Vec<T>>,
}

impl<T: Real> From<&PiecewiseSurface<T>> for SurfaceFile<T> {
    fn from(s: &PiecewiseSurface<T>) -> Self {
        let n = s.degree + 1;
        let patches = s
            .patches
            .iter()
            .enumerate()
            .map(|(idx, p)| {
                let (k, l) = s.grid.cell_coords(idx);
                PatchFile {
                    k,
                    l,
                    coefficients: p.coeffs.chunks(n).map(<[T]>::to_vec).collect(),
                }
            })
            .collect();
        SurfaceFile {
            domain: s.grid.domain,
            t_knots: s.grid.t_knots.clone(),
            x_knots: s.grid.x_knots.clone(),
            degree: s.degree,
            smoothness: s.smoothness,
            scaling: s.scaling,
            patches,
        }
    }
}

impl<T: Real> TryFrom<SurfaceFile<T>> for PiecewiseSurface<T> {
    type Error = SplineError;

    fn try_from(f: SurfaceFile<T>) -> Result<Self, SplineError> {
        let grid = KnotGrid::new(f.domain, f.t_knots, f.x_knots)?;
        if f.scaling != grid.scaling() {
            return Err(SplineError::Format("axis scaling does not match the domain".into()));
        }
        let n = f.degree + 1;
        let mut patches = vec![None; grid.n_cells()];
        for p in f.patches {
            if p.k > grid.h() || p.l > grid.v() {
                return Err(SplineError::Format(format!("patch ({}, {}) outside the grid", p.k, p.l)));
            }
            if p.coefficients.len() != n || p.coefficients.iter().any(|r| r.len() != n) {
                return Err(SplineError::Format(format!("patch ({}, {}) is not {n}x{n}", p.k, p.l)));
            }
            let coeffs = p.coefficients.into_iter().flatten().collect();
            patches[grid.cell_index(p.k, p.l)] = Some(PolyPatch::from_coeffs(f.degree, coeffs));
        }
        let patches = patches
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| SplineError::Format("missing patches".into()))?;
        PiecewiseSurface::new(grid, f.degree, f.smoothness, patches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_single(p: PolyPatch<f64>) -> PiecewiseSurface<f64> {
        let grid = KnotGrid::single(Domain::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        PiecewiseSurface::new(grid, 3, Smoothness::C2, vec![p]).unwrap()
    }

    #[test]
    fn constant_surface_everywhere() {
        let s = unit_single(PolyPatch::with(3, &[(0, 0, 0.7)]));
        assert_eq!(s.evaluate(0.2, 0.9), 0.7);
        assert_eq!(s.evaluate_flagged(3.0, 0.5), (0.7, true));
    }

    #[test]
    fn rescaled_derivatives_use_original_units() {
        // P(t, x) = t * x on [0, 4] x [0, 10]: in (u, w) it is 40 u w.
        let grid = KnotGrid::<f64>::single(Domain::new(0.0, 4.0, 0.0, 10.0)).unwrap();
        let s = PiecewiseSurface::new(grid, 3, Smoothness::C2, vec![PolyPatch::with(3, &[(1, 1, 40.0)])]).unwrap();
        assert!((s.evaluate(2.0, 3.0) - 6.0).abs() < 1e-14);
        assert!((s.partial(1.0, 7.0, 1, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((s.partial(1.0, 7.0, 1, 0).unwrap() - 7.0).abs() < 1e-14);
        assert!(s.partial(1.0, 1.0, 2, 1).is_err());
    }

    #[test]
    fn total_order_zero_partial_is_evaluate() {
        let s = unit_single(PolyPatch::with(3, &[(1, 2, 0.3), (3, 3, -1.2), (0, 1, 2.0)]));
        for &(t, x) in &[(0.1, 0.2), (0.9, 0.4), (0.5, 0.5)] {
            assert_eq!(s.partial(t, x, 0, 0).unwrap(), s.evaluate(t, x));
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let grid = KnotGrid::new(Domain::new(1.0, 1095.0, 25.0, 60.0), vec![180.0], vec![40.0]).unwrap();
        let coeffs: Vec<f64> = (0..64).map(|i| (i as f64 * 0.123_456_789).sin() / 3.0).collect();
        let s = PiecewiseSurface::from_coefficients(grid, 3, Smoothness::C2, &coeffs).unwrap();
        let back = PiecewiseSurface::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(back.coefficients().iter().zip(&coeffs).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_inconsistent_files() {
        let s = unit_single(PolyPatch::zeros(3));
        let mut f = SurfaceFile::from(&s);
        f.patches[0].coefficients.pop();
        assert!(PiecewiseSurface::try_from(f).is_err());
        assert!(PiecewiseSurface::from_json("{}").is_err());
    }
}
