//! Graduation of disability maintenance laws.
//!
//! The pipeline runs from censored claim durations to reserving tables:
//!
//! 1. [`ingest`]: load or simulate claim records and build daily risk sets.
//! 2. [`survival`]: Kaplan-Meier per entry age, Greenwood variance, raw
//!    daily exit rates.
//! 3. [`spline`] and [`fitting`]: a C1/C2 piecewise-polynomial surface over
//!    (duration, entry age) fitted by penalized least squares under
//!    interface-continuity constraints.
//! 4. [`whittaker`]: two-dimensional Whittaker-Henderson smoothing as a
//!    comparison baseline.
//! 5. [`validation`]: grouped chi-square goodness of fit.
//! 6. [`reserving`]: monthly maintenance tables, discrete and continuous
//!    reserving coefficients, residual expectancies.
//!
//! The spline and smoothing code is generic over the scalar type; the
//! aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod fitting;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod rates;
pub mod reserving;
pub mod scalar;
pub mod spline;
pub mod survival;
pub mod validation;
pub mod whittaker;

pub use rates::{DailyRates, RateGrid};
pub use scalar::{Coefficient, Real};
pub use spline::Smoothness;

pub type KnotGrid = spline::KnotGrid<f64>;
pub type PolyPatch = spline::PolyPatch<f64>;
pub type PPSurface = spline::PiecewiseSurface<f64>;
pub type PPSurfaceF32 = spline::PiecewiseSurface<f32>;
pub type FitOutcome = fitting::FitOutcome<f64>;

