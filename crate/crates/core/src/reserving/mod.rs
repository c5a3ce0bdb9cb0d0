//! Maintenance tables, reserving coefficients and residual expectancies.

mod continuous;
mod expectancy;
mod table;

pub use continuous::{
    annuity_integral, convergence_order, reserve_continuous, reserve_refined_discrete, ContinuousReserve,
    ContinuousSurvival,
};
pub use expectancy::{
    compare_pipelines, expectancy_from_survival, fit_expectancy_pipeline, invert_expectancy, residual_expectancy,
    ExpectancyConfig, ExpectancyOutcome, PipelineComparison, TailClosure,
};
pub use table::{
    compare_tables, maintenance_table, reserve_discrete, reserve_table, MaintenanceTable, ReserveTable,
    TableComparison,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::FitError;
use crate::validation::ValidationError;

/// Largest admissible daily rate when converting to a hazard.
pub const CLAMP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ReserveError {
    #[error("invalid reserving configuration: {0}")]
    Config(String),
    #[error("rate source is not finite at age {age}, day {day}")]
    Undefined { age: f64, day: f64 },
    #[error("elapsed duration {y} outside 0..={horizon} months")]
    DurationOutOfRange { y: f64, horizon: u32 },
    #[error("entry age {0} is not in the table")]
    UnknownAge(i32),
    #[error("no survivors at month {month} for entry age {age}")]
    NoSurvivors { age: i32, month: u32 },
    #[error("survival reaches zero at day {day} for entry age {age} before the horizon")]
    ZeroSurvival { age: i32, day: u32 },
    #[error("fitted expectancy is not positive ({value}) at age {age}, day {day}")]
    NonPositiveExpectancy { age: i32, day: u32, value: f64 },
    #[error("candidate table is zero at age {age}, month {month}")]
    ZeroCandidate { age: i32, month: u32 },
    #[error("tables share no (age, month) cell")]
    NoOverlap,
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Horizon, month-to-day mapping and radix shared by the reserving code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReserveConfig {
    pub horizon_months: u32,
    pub days_per_month: f64,
    pub radix: f64,
}

impl Default for ReserveConfig {
    fn default() -> Self {
        Self {
            horizon_months: 36,
            days_per_month: 365.25 / 12.0,
            radix: 10000.0,
        }
    }
}

impl ReserveConfig {
    /// `round(m * days_per_month)`.
    pub fn day_of_month(&self, m: u32) -> u32 {
        (m as f64 * self.days_per_month).round() as u32
    }

    pub fn validate(&self) -> Result<(), ReserveError> {
        if self.horizon_months == 0 {
            return Err(ReserveError::Config("horizon must be at least one month".into()));
        }
        if !(self.days_per_month > 0.0 && self.days_per_month.is_finite()) {
            return Err(ReserveError::Config(format!("invalid days per month {}", self.days_per_month)));
        }
        if !(self.radix > 0.0 && self.radix.is_finite()) {
            return Err(ReserveError::Config(format!("invalid radix {}", self.radix)));
        }
        Ok(())
    }
}

/// Daily hazard `-ln(1 - q)` with `q` clamped to `[0, 1 - CLAMP_EPS]`.
/// Returns the hazard and whether clamping occurred.
pub fn daily_hazard(q: f64) -> (f64, bool) {
    let c = q.clamp(0.0, 1.0 - CLAMP_EPS);
    (-(-c).ln_1p(), c != q)
}
