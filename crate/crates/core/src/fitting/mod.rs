//! Penalized least-squares fitting of piecewise-polynomial surfaces.
//!
//! The objective is `alpha * fidelity + (1 - alpha) * roughness` subject to
//! the interface-continuity constraints `C c = 0`. Constraints are eliminated
//! with an orthonormal basis `Z` of `ker C`; the reduced system
//! `Z^t (alpha H_f + (1 - alpha) H_r) Z y = alpha Z^t b` is solved by
//! Cholesky and `c = Z y`.

mod knots;
mod local;

pub use knots::{auto_knots, curvature_energy};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::NullSpace;
use crate::scalar::Real;
use crate::spline::{
    continuity_constraints, ConstraintSystem, DataPoint, Domain, KnotGrid, PiecewiseSurface, QuadraticForm, Smoothness,
    SplineError,
};
use crate::survival::RawRateSurface;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("regularity-only fit is rank-deficient; affine ambiguity")]
    AffineAmbiguity,
    #[error(
        "singular reduced system: {deficient} deficient direction(s) (smallest eigenvalue {min_eigenvalue:e}); \
         cells without data: {empty_cells:?}"
    )]
    Singular {
        deficient: usize,
        min_eigenvalue: f64,
        empty_cells: Vec<(usize, usize)>,
    },
    #[error("knot placement: {0}")]
    Knots(String),
}

/// Interior knot lines, either given or chosen from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotSpec {
    Fixed { t_knots: Vec<f64>, x_knots: Vec<f64> },
    /// `h` horizontal (age) lines and `v` vertical (duration) lines.
    Auto { h: usize, v: usize },
}

impl Default for KnotSpec {
    fn default() -> Self {
        KnotSpec::Auto { h: 2, v: 3 }
    }
}

/// Scale of the fidelity weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScale {
    /// Normalized weights times the total exposure of the observed cells,
    /// so exposure weighting gives `omega(x, t) = n_x(t)`.
    #[default]
    Count,
    /// Normalized weights as stored on the raw surface (sum one).
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub alpha: f64,
    pub degree: usize,
    pub smoothness: Smoothness,
    pub knots: KnotSpec,
    /// Per-cell roughness weights; `None` means 1 everywhere.
    pub lambda: Option<Vec<f64>>,
    /// Keep every `stride`-th duration in the fidelity sum.
    pub stride: usize,
    pub weight_scale: WeightScale,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            degree: 3,
            smoothness: Smoothness::C2,
            knots: KnotSpec::default(),
            lambda: None,
            stride: 1,
            weight_scale: WeightScale::Count,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FitError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.degree == 0 || self.degree > crate::spline::MAX_DEGREE {
            return Err(FitError::Config(format!(
                "degree must lie in 1..={}, got {}",
                crate::spline::MAX_DEGREE,
                self.degree
            )));
        }
        if self.degree < self.smoothness.order() {
            return Err(FitError::Config(format!(
                "degree {} cannot carry {:?} interfaces",
                self.degree, self.smoothness
            )));
        }
        if self.stride == 0 {
            return Err(FitError::Config("stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Raw surface cell where the fitted value leaves [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutOfRange {
    pub age: i32,
    pub day: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub alpha: f64,
    pub degree: usize,
    pub smoothness: Smoothness,
    pub t_knots: Vec<f64>,
    pub x_knots: Vec<f64>,
    pub n_points: usize,
    /// Weighted sum of squared deviations.
    pub sse: f64,
    pub roughness: f64,
    pub objective: f64,
    /// Max-norm of `C c`.
    pub constraint_residual: f64,
    /// Stationarity residual relative to `1 + |rhs|`.
    pub kkt_residual: f64,
    /// Ratio of extreme eigenvalues of the reduced system.
    pub condition_estimate: f64,
    pub n_unknowns: usize,
    pub n_constraints: usize,
    pub constraint_rank: usize,
    pub null_space_dim: usize,
    pub empty_cells: Vec<(usize, usize)>,
    pub out_of_range_cells: Vec<OutOfRange>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub surface: PiecewiseSurface<T>,
    pub report: FitReport,
}

/// Assembled forms for one data set and grid, reusable across `alpha`.
///
/// `fidelity`, `roughness`, `constraints` and `null_space` are expressed in
/// patch-local coefficients; `global_constraints` acts on the surface's
/// stored coefficients.
#[derive(Debug, Clone)]
pub struct FitProblem<T: Real> {
    pub grid: KnotGrid<T>,
    pub degree: usize,
    pub smoothness: Smoothness,
    pub fidelity: QuadraticForm<T>,
    pub roughness: DMatrix<T>,
    pub constraints: DMatrix<T>,
    pub global_constraints: ConstraintSystem<T>,
    pub null_space: NullSpace<T>,
    frames: Vec<local::Frame<T>>,
    points: Vec<DataPoint<T>>,
    empty_cells: Vec<(usize, usize)>,
}

/// Solution of a [`FitProblem`] for one `alpha`.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    /// Stacked coefficients of the surface patches.
    pub coefficients: Vec<T>,
    pub local_coefficients: DVector<T>,
    pub sse: T,
    pub roughness: T,
    pub constraint_residual: T,
    pub kkt_residual: T,
    pub condition_estimate: T,
}

impl<T: Real> FitProblem<T> {
    pub fn new(
        points: Vec<DataPoint<T>>,
        grid: KnotGrid<T>,
        degree: usize,
        smoothness: Smoothness,
        lambda: Option<&[f64]>,
    ) -> Result<Self, FitError> {
        let global_constraints = continuity_constraints(&grid, degree, smoothness)?;
        let frames = local::frames(&grid);
        let fidelity = local::fidelity(&points, &grid, degree, &frames)?;
        let roughness = local::roughness(&grid, degree, &frames, lambda)?;
        let constraints = local::constraints(&grid, degree, smoothness, &frames);
        let n = fidelity.b.len();
        let tol = T::of(1e-10).max(T::default_epsilon() * T::of(100.0 * n as f64));
        let null_space = NullSpace::of(&constraints, tol);

        let mut occupied = vec![false; grid.n_cells()];
        for p in points.iter().filter(|p| p.weight > T::zero()) {
            let (k, l) = grid.locate(p.t, p.x);
            occupied[grid.cell_index(k, l)] = true;
        }
        let empty_cells = occupied
            .iter()
            .enumerate()
            .filter(|(_, o)| !**o)
            .map(|(i, _)| grid.cell_coords(i))
            .collect();
        debug!(
            "fit problem: {} unknowns, {} constraint rows of rank {}, null space {}",
            n,
            constraints.nrows(),
            null_space.rank,
            null_space.dim()
        );
        Ok(Self {
            grid,
            degree,
            smoothness,
            fidelity,
            roughness,
            constraints,
            global_constraints,
            null_space,
            frames,
            points,
            empty_cells,
        })
    }

    pub fn points(&self) -> &[DataPoint<T>] {
        &self.points
    }

    pub fn empty_cells(&self) -> &[(usize, usize)] {
        &self.empty_cells
    }

    pub fn n_unknowns(&self) -> usize {
        self.fidelity.b.len()
    }

    /// Maps stacked local coefficients to stacked surface coefficients.
    pub fn to_global(&self, local: &DVector<T>) -> Vec<T> {
        let m = (self.degree + 1) * (self.degree + 1);
        let b: Vec<T> = local.iter().copied().collect();
        self.frames
            .iter()
            .zip(b.chunks(m))
            .flat_map(|(f, chunk)| local::to_global(f, self.degree, chunk))
            .collect()
    }

    pub fn solve(&self, alpha: T) -> Result<Solution<T>, FitError> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(FitError::Config(format!("alpha must lie in [0, 1], got {}", alpha.as_f64())));
        }
        if alpha == T::zero() {
            return Err(FitError::AffineAmbiguity);
        }
        let z = &self.null_space.basis;
        let beta = T::one() - alpha;
        let hessian = &self.fidelity.h * alpha + &self.roughness * beta;
        let mut reduced = z.transpose() * &hessian * z;
        symmetrize(&mut reduced);
        let rhs = z.transpose() * &self.fidelity.b * alpha;

        let eig = reduced.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        let lmin = eig.eigenvalues.iter().fold(lmax, |a, &b| a.min(b));
        let tol = lmax * T::default_epsilon() * T::of(100.0 * reduced.nrows() as f64);
        let deficient = eig.eigenvalues.iter().filter(|&&v| v <= tol).count();
        if deficient > 0 || lmax == T::zero() {
            return Err(FitError::Singular {
                deficient: deficient.max(1),
                min_eigenvalue: lmin.as_f64(),
                empty_cells: self.empty_cells.clone(),
            });
        }
        let chol = reduced.clone().cholesky().ok_or_else(|| FitError::Singular {
            deficient: 1,
            min_eigenvalue: lmin.as_f64(),
            empty_cells: self.empty_cells.clone(),
        })?;
        let mut y = chol.solve(&rhs);
        // One step of iterative refinement on the reduced system.
        let r = &rhs - &reduced * &y;
        y += chol.solve(&r);
        let b = z * y;

        let two = T::of(2.0);
        let full_rhs = &self.fidelity.b * (two * alpha);
        let gradient = &hessian * &b * two - &full_rhs;
        let stationarity = if self.constraints.nrows() == 0 {
            gradient.clone()
        } else {
            let mu = self.null_space.multipliers(&gradient);
            &gradient - self.constraints.transpose() * mu
        };
        let local_feasibility = if self.constraints.nrows() == 0 { T::zero() } else { (&self.constraints * &b).amax() };
        let kkt = stationarity.amax().max(local_feasibility) / (T::one() + full_rhs.norm());

        let coefficients = self.to_global(&b);
        let constraint_residual = self.global_constraints.residual_max(&coefficients);
        let surface = PiecewiseSurface::from_coefficients(self.grid.clone(), self.degree, self.smoothness, &coefficients)?;
        let sse = self.points.iter().fold(T::zero(), |acc, p| {
            let e = surface.evaluate(p.t, p.x) - p.value;
            acc + p.weight * e * e
        });
        let roughness = (b.transpose() * &self.roughness * &b)[(0, 0)];
        Ok(Solution {
            coefficients,
            local_coefficients: b,
            sse,
            roughness,
            constraint_residual,
            kkt_residual: kkt,
            condition_estimate: lmax / lmin,
        })
    }

    pub fn surface(&self, solution: &Solution<T>) -> Result<PiecewiseSurface<T>, FitError> {
        Ok(PiecewiseSurface::from_coefficients(
            self.grid.clone(),
            self.degree,
            self.smoothness,
            &solution.coefficients,
        )?)
    }
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::of(0.5);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest rectangle holding the raw grid, in (day, age) coordinates.
pub fn raw_domain(raw: &RawRateSurface) -> Result<Domain<f64>, FitError> {
    if raw.n_ages < 2 || raw.n_days < 2 {
        return Err(FitError::Config(format!(
            "raw surface must span at least two ages and two days, got {}x{}",
            raw.n_ages, raw.n_days
        )));
    }
    Ok(Domain::new(
        raw.day_min as f64,
        raw.day_max() as f64,
        raw.age_min as f64,
        raw.age_max() as f64,
    ))
}

/// Knot grid for `raw` as requested by `config`.
pub fn resolve_grid(raw: &RawRateSurface, config: &FitConfig) -> Result<KnotGrid<f64>, FitError> {
    match &config.knots {
        KnotSpec::Fixed { t_knots, x_knots } => Ok(KnotGrid::new(raw_domain(raw)?, t_knots.clone(), x_knots.clone())?),
        KnotSpec::Auto { h, v } => auto_knots(raw, *h, *v),
    }
}

/// Fits a surface to a raw rate grid.
pub fn fit_surface(raw: &RawRateSurface, config: &FitConfig) -> Result<FitOutcome<f64>, FitError> {
    config.validate()?;
    if raw.unmasked_count() == 0 {
        return Err(SplineError::NoData.into());
    }
    let grid = resolve_grid(raw, config)?;
    let problem = FitProblem::new(
        fit_points_of(raw, config),
        grid,
        config.degree,
        config.smoothness,
        config.lambda.as_deref(),
    )?;
    let solution = problem.solve(config.alpha)?;
    let surface = problem.surface(&solution)?;
    let report = build_report(&problem, &solution, config.alpha, &surface, Some(raw));
    if !report.empty_cells.is_empty() {
        warn!("cells without data, determined by roughness only: {:?}", report.empty_cells);
    }
    if !report.out_of_range_cells.is_empty() {
        warn!("fitted surface leaves [0, 1] on {} raw cells", report.out_of_range_cells.len());
    }
    Ok(FitOutcome { surface, report })
}

/// Data points of `raw` with weights on the configured scale.
pub fn fit_points_of(raw: &RawRateSurface, config: &FitConfig) -> Vec<DataPoint<f64>> {
    let mut points = crate::spline::raw_points::<f64>(raw, config.stride);
    if config.weight_scale == WeightScale::Count {
        let total: f64 = (0..raw.len()).filter(|&i| !raw.masked[i]).map(|i| raw.at_risk[i]).sum();
        for p in &mut points {
            p.weight *= total;
        }
    }
    points
}

/// Generic-scalar fit on explicit data points.
pub fn fit_points<T: Real>(
    points: Vec<DataPoint<T>>,
    grid: KnotGrid<T>,
    degree: usize,
    smoothness: Smoothness,
    alpha: T,
) -> Result<FitOutcome<T>, FitError> {
    let problem = FitProblem::new(points, grid, degree, smoothness, None)?;
    let solution = problem.solve(alpha)?;
    let surface = problem.surface(&solution)?;
    let report = build_report(&problem, &solution, alpha.as_f64(), &surface, None);
    Ok(FitOutcome { surface, report })
}

pub fn build_report<T: Real>(
    problem: &FitProblem<T>,
    solution: &Solution<T>,
    alpha: f64,
    surface: &PiecewiseSurface<T>,
    raw: Option<&RawRateSurface>,
) -> FitReport {
    let out_of_range_cells = raw
        .map(|raw| {
            (0..raw.len())
                .filter_map(|i| {
                    let (age, day) = raw.coords(i);
                    let v = surface.evaluate(T::of(day as f64), T::of(age as f64)).as_f64();
                    (!(0.0..=1.0).contains(&v)).then_some(OutOfRange { age, day, value: v })
                })
                .collect()
        })
        .unwrap_or_default();
    let sse = solution.sse.as_f64();
    let roughness = solution.roughness.as_f64();
    FitReport {
        alpha,
        degree: problem.degree,
        smoothness: problem.smoothness,
        t_knots: problem.grid.t_knots.iter().map(|v| v.as_f64()).collect(),
        x_knots: problem.grid.x_knots.iter().map(|v| v.as_f64()).collect(),
        n_points: problem.points.len(),
        sse,
        roughness,
        objective: alpha * sse + (1.0 - alpha) * roughness,
        constraint_residual: solution.constraint_residual.as_f64(),
        kkt_residual: solution.kkt_residual.as_f64(),
        condition_estimate: solution.condition_estimate.as_f64(),
        n_unknowns: problem.n_unknowns(),
        n_constraints: problem.constraints.nrows(),
        constraint_rank: problem.null_space.rank,
        null_space_dim: problem.null_space.dim(),
        empty_cells: problem.empty_cells.clone(),
        out_of_range_cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub alpha: f64,
    pub sse: f64,
    pub roughness: f64,
}

/// SSE and roughness of the optimal fit for each `alpha`, sharing one
/// assembled problem.
pub fn fidelity_regularity_tradeoff(
    raw: &RawRateSurface,
    config: &FitConfig,
    alphas: &[f64],
) -> Result<Vec<TradeoffRow>, FitError> {
    config.validate()?;
    if let Some(&bad) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(FitError::Config(format!("tradeoff alphas must lie in (0, 1], got {bad}")));
    }
    let grid = resolve_grid(raw, config)?;
    let problem = FitProblem::new(
        fit_points_of(raw, config),
        grid,
        config.degree,
        config.smoothness,
        config.lambda.as_deref(),
    )?;
    alphas
        .iter()
        .map(|&alpha| {
            let s = problem.solve(alpha)?;
            Ok(TradeoffRow {
                alpha,
                sse: s.sse,
                roughness: s.roughness,
            })
        })
        .collect()
}
