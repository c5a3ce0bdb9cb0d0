//! Daily exit-rate sources.
//!
//! Anything that can answer "what is the probability of leaving incapacity on
//! day `t` for a claimant who entered at age `x`" implements [`DailyRates`]:
//! parametric hazards used for simulation, fitted spline surfaces, and plain
//! grids such as a Whittaker-Henderson output.

use serde::{Deserialize, Serialize};

pub trait DailyRates {
    /// Conditional exit probability on day `day` (day 1 is the first observed
    /// day after the franchise) for entry age `age`.
    fn daily_rate(&self, age: f64, day: f64) -> f64;

    /// Whether `(age, day)` lies outside the region the source was built on.
    fn is_extrapolation(&self, _age: f64, _day: f64) -> bool {
        false
    }
}

impl<F> DailyRates for F
where
    F: Fn(f64, f64) -> f64,
{
    fn daily_rate(&self, age: f64, day: f64) -> f64 {
        self(age, day)
    }
}

/// Clamps another source into `[0, 1]`, e.g. to simulate from a fitted surface.
#[derive(Debug, Clone, Copy)]
pub struct Clamped<R>(pub R);

impl<R: DailyRates> DailyRates for Clamped<R> {
    fn daily_rate(&self, age: f64, day: f64) -> f64 {
        self.0.daily_rate(age, day).clamp(0.0, 1.0)
    }

    fn is_extrapolation(&self, age: f64, day: f64) -> bool {
        self.0.is_extrapolation(age, day)
    }
}

/// Rates tabulated on an integer (age, day) lattice, row-major by age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub age_min: i32,
    pub n_ages: usize,
    pub day_min: u32,
    pub n_days: usize,
    pub values: Vec<f64>,
}

impl RateGrid {
    pub fn new(age_min: i32, n_ages: usize, day_min: u32, n_days: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_ages * n_days, "grid size mismatch");
        Self {
            age_min,
            n_ages,
            day_min,
            n_days,
            values,
        }
    }

    pub fn age_max(&self) -> i32 {
        self.age_min + self.n_ages as i32 - 1
    }

    pub fn day_max(&self) -> u32 {
        self.day_min + self.n_days as u32 - 1
    }

    pub fn get(&self, age: i32, day: u32) -> Option<f64> {
        if age < self.age_min || age > self.age_max() || day < self.day_min || day > self.day_max() {
            return None;
        }
        let a = (age - self.age_min) as usize;
        let d = (day - self.day_min) as usize;
        Some(self.values[a * self.n_days + d])
    }
}

impl DailyRates for RateGrid {
    /// Nearest lattice value; queries outside the grid use the closest edge.
    fn daily_rate(&self, age: f64, day: f64) -> f64 {
        let a = (age.round() as i64 - self.age_min as i64).clamp(0, self.n_ages as i64 - 1) as usize;
        let d = (day.round() as i64 - self.day_min as i64).clamp(0, self.n_days as i64 - 1) as usize;
        self.values[a * self.n_days + d]
    }

    fn is_extrapolation(&self, age: f64, day: f64) -> bool {
        age < self.age_min as f64 || age > self.age_max() as f64 || day < self.day_min as f64 || day > self.day_max() as f64
    }
}
