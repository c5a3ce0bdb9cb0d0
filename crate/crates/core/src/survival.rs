//! Per-age Kaplan-Meier estimation, Greenwood variance and raw daily exit
//! rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AgeCohort, CohortData};

#[derive(Debug, Error, PartialEq)]
pub enum SurvivalError {
    #[error("no exposure for entry age {0}")]
    NoExposure(i32),
    #[error("curve for age {curve_age} does not match the cohort ({reason})")]
    Mismatch { curve_age: i32, reason: &'static str },
    #[error("empty age range {0}..={1}")]
    EmptyRange(i32, i32),
    #[error("invalid raw surface: {0}")]
    InvalidSurface(String),
}

/// Product-limit survival for one entry age; `survival[t - 1]` is S(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub age: i32,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// S(t), with S(0) = 1.
    pub fn at(&self, day: u32) -> f64 {
        if day == 0 {
            1.0
        } else {
            self.survival[day as usize - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenwoodVariance {
    pub age: i32,
    pub variance: Vec<f64>,
    /// First day at which the whole risk set exited (n = d). The variance is
    /// reported as 0 from there on, with S = 0.
    pub degenerate_from: Option<u32>,
}

/// Tie-aware product-limit estimator on the daily grid:
/// `S(t) = prod_{i <= t} (1 - d(i) / n(i))`. Days with an empty risk set
/// leave the estimate unchanged.
pub fn kaplan_meier(cohort: &CohortData, age: i32) -> Result<SurvivalCurve, SurvivalError> {
    let c = cohort.age(age).filter(|c| !c.is_empty()).ok_or(SurvivalError::NoExposure(age))?;
    let mut s = 1.0;
    let survival = c
        .at_risk
        .iter()
        .zip(&c.exits)
        .map(|(&n, &d)| {
            if n > 0 {
                s *= 1.0 - d as f64 / n as f64;
            }
            s
        })
        .collect();
    Ok(SurvivalCurve { age, survival })
}

/// Greenwood's formula `Var S(t) = S(t)^2 * sum_{i <= t} d(i) / (n(i) (n(i) - d(i)))`.
pub fn greenwood_variance(cohort: &CohortData, curve: &SurvivalCurve) -> Result<GreenwoodVariance, SurvivalError> {
    let c = cohort.age(curve.age).ok_or(SurvivalError::Mismatch {
        curve_age: curve.age,
        reason: "age absent from cohort",
    })?;
    if c.at_risk.len() != curve.survival.len() {
        return Err(SurvivalError::Mismatch {
            curve_age: curve.age,
            reason: "day ranges differ",
        });
    }
    let mut sum = 0.0;
    let mut degenerate_from = None;
    let variance = (0..c.at_risk.len())
        .map(|t| {
            let (n, d) = (c.at_risk[t], c.exits[t]);
            if degenerate_from.is_none() && d > 0 {
                if n == d {
                    degenerate_from = Some(t as u32 + 1);
                } else {
                    sum += d as f64 / (n as f64 * (n - d) as f64);
                }
            }
            if degenerate_from.is_some() {
                0.0
            } else {
                curve.survival[t] * curve.survival[t] * sum
            }
        })
        .collect();
    Ok(GreenwoodVariance {
        age: curve.age,
        variance,
        degenerate_from,
    })
}

/// Estimates every non-empty age independently.
pub fn estimate_all(cohort: &CohortData) -> Vec<(SurvivalCurve, GreenwoodVariance)> {
    let ages: Vec<i32> = cohort.cohorts.values().filter(|c| !c.is_empty()).map(|c| c.age).collect();
    ages.par_iter()
        .map(|&age| {
            let curve = kaplan_meier(cohort, age).expect("non-empty age");
            let var = greenwood_variance(cohort, &curve).expect("curve from cohort");
            (curve, var)
        })
        .collect()
}

/// Descriptive per-age summary (exposure, uncensored share, volatility).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub age: i32,
    pub claims: u64,
    pub uncensored_fraction: f64,
    pub censored_at_horizon: u64,
    /// Mean of ln Var S(t) over days with positive variance.
    pub mean_log_variance: Option<f64>,
}

pub fn age_summaries(cohort: &CohortData) -> Vec<AgeSummary> {
    let estimates = estimate_all(cohort);
    cohort
        .cohorts
        .values()
        .map(|c| {
            let mean_log_variance = estimates.iter().find(|(s, _)| s.age == c.age).and_then(|(_, v)| {
                let logs: Vec<f64> = v.variance.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
                (!logs.is_empty()).then(|| logs.iter().sum::<f64>() / logs.len() as f64)
            });
            AgeSummary {
                age: c.age,
                claims: c.size(),
                uncensored_fraction: if c.size() > 0 {
                    c.total_exits() as f64 / c.size() as f64
                } else {
                    0.0
                },
                censored_at_horizon: *c.censored.last().unwrap_or(&0),
                mean_log_variance,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight proportional to the number at risk.
    #[default]
    Exposure,
    /// Equal weight on every observed cell.
    Uniform,
}

/// Raw daily exit rates on a rectangular (age x day) grid, row-major by age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRateSurface {
    pub age_min: i32,
    pub n_ages: usize,
    pub day_min: u32,
    pub n_days: usize,
    pub q: Vec<f64>,
    /// Fidelity weights, normalized to sum to one over unmasked cells.
    pub weight: Vec<f64>,
    pub at_risk: Vec<f64>,
    /// Cells without exposure.
    pub masked: Vec<bool>,
}

impl RawRateSurface {
    /// Builds a surface from explicit values. Cells with zero exposure are
    /// masked and their rate is forced to 0; weights are normalized.
    pub fn new(
        age_min: i32,
        n_ages: usize,
        day_min: u32,
        n_days: usize,
        q: Vec<f64>,
        weight: Vec<f64>,
        at_risk: Vec<f64>,
    ) -> Result<Self, SurvivalError> {
        let len = n_ages * n_days;
        if n_ages == 0 || n_days == 0 {
            return Err(SurvivalError::InvalidSurface("empty grid".into()));
        }
        if q.len() != len || weight.len() != len || at_risk.len() != len {
            return Err(SurvivalError::InvalidSurface("array lengths do not match the grid".into()));
        }
        if weight.iter().chain(&at_risk).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SurvivalError::InvalidSurface("weights and exposures must be finite and non-negative".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(SurvivalError::InvalidSurface("rates must be finite".into()));
        }
        let masked: Vec<bool> = at_risk.iter().map(|&n| n == 0.0).collect();
        let mut s = Self {
            age_min,
            n_ages,
            day_min,
            n_days,
            q,
            weight,
            at_risk,
            masked,
        };
        for i in 0..len {
            if s.masked[i] {
                s.q[i] = 0.0;
                s.weight[i] = 0.0;
            }
        }
        s.normalize_weights();
        Ok(s)
    }

    /// Convenience constructor where the weights double as exposures.
    pub fn from_weighted(
        age_min: i32,
        n_ages: usize,
        day_min: u32,
        n_days: usize,
        q: Vec<f64>,
        weight: Vec<f64>,
    ) -> Result<Self, SurvivalError> {
        let at_risk = weight.clone();
        Self::new(age_min, n_ages, day_min, n_days, q, weight, at_risk)
    }

    pub fn age_max(&self) -> i32 {
        self.age_min + self.n_ages as i32 - 1
    }

    pub fn day_max(&self) -> u32 {
        self.day_min + self.n_days as u32 - 1
    }

    pub fn index(&self, age: i32, day: u32) -> usize {
        (age - self.age_min) as usize * self.n_days + (day - self.day_min) as usize
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// (age, day) of cell `i`.
    pub fn coords(&self, i: usize) -> (i32, u32) {
        (self.age_min + (i / self.n_days) as i32, self.day_min + (i % self.n_days) as u32)
    }

    pub fn unmasked_count(&self) -> usize {
        self.masked.iter().filter(|m| !**m).count()
    }

    fn normalize_weights(&mut self) {
        let total: f64 = self.weight.iter().sum();
        if total > 0.0 {
            for w in &mut self.weight {
                *w /= total;
            }
        }
    }
}

/// Raw rates `q(x, t) = d_x(t) / n_x(t)` over the cohort's contiguous age
/// range and days `1..=horizon`.
pub fn exit_rates(cohort: &CohortData, weighting: Weighting) -> Result<RawRateSurface, SurvivalError> {
    let (lo, hi) = cohort.age_range().ok_or(SurvivalError::EmptyRange(0, -1))?;
    let n_ages = (hi - lo + 1) as usize;
    let n_days = cohort.horizon as usize;
    let mut q = Vec::with_capacity(n_ages * n_days);
    let mut weight = Vec::with_capacity(n_ages * n_days);
    let mut at_risk = Vec::with_capacity(n_ages * n_days);
    for c in cohort.cohorts.values() {
        push_age(c, weighting, &mut q, &mut weight, &mut at_risk);
    }
    RawRateSurface::new(lo, n_ages, 1, n_days, q, weight, at_risk)
}

fn push_age(c: &AgeCohort, weighting: Weighting, q: &mut Vec<f64>, w: &mut Vec<f64>, n_out: &mut Vec<f64>) {
    for (&n, &d) in c.at_risk.iter().zip(&c.exits) {
        let nf = n as f64;
        q.push(if n > 0 { d as f64 / nf } else { 0.0 });
        w.push(match (weighting, n > 0) {
            (_, false) => 0.0,
            (Weighting::Exposure, true) => nf,
            (Weighting::Uniform, true) => 1.0,
        });
        n_out.push(nf);
    }
}

/// Restricts a surface to entry ages `x_min..=x_max`, renormalizing weights.
pub fn trim_ages(surface: &RawRateSurface, x_min: i32, x_max: i32) -> Result<RawRateSurface, SurvivalError> {
    let lo = x_min.max(surface.age_min);
    let hi = x_max.min(surface.age_max());
    if x_min > x_max || lo > hi {
        return Err(SurvivalError::EmptyRange(x_min, x_max));
    }
    let a0 = (lo - surface.age_min) as usize * surface.n_days;
    let a1 = (hi - surface.age_min + 1) as usize * surface.n_days;
    subgrid(surface, lo, (hi - lo + 1) as usize, surface.day_min, surface.n_days, a0..a1, |_| true)
}

/// Restricts a surface to days `t_min..=t_max`, renormalizing weights.
pub fn trim_days(surface: &RawRateSurface, t_min: u32, t_max: u32) -> Result<RawRateSurface, SurvivalError> {
    let lo = t_min.max(surface.day_min);
    let hi = t_max.min(surface.day_max());
    if t_min > t_max || lo > hi {
        return Err(SurvivalError::EmptyRange(t_min as i32, t_max as i32));
    }
    let keep = |i: usize| {
        let day = surface.day_min + (i % surface.n_days) as u32;
        (lo..=hi).contains(&day)
    };
    subgrid(surface, surface.age_min, surface.n_ages, lo, (hi - lo + 1) as usize, 0..surface.len(), keep)
}

fn subgrid(
    s: &RawRateSurface,
    age_min: i32,
    n_ages: usize,
    day_min: u32,
    n_days: usize,
    range: std::ops::Range<usize>,
    keep: impl Fn(usize) -> bool,
) -> Result<RawRateSurface, SurvivalError> {
    let idx: Vec<usize> = range.filter(|&i| keep(i)).collect();
    if idx.len() == s.len() {
        return Ok(s.clone());
    }
    let q = idx.iter().map(|&i| s.q[i]).collect();
    let w = idx.iter().map(|&i| s.weight[i]).collect();
    let n = idx.iter().map(|&i| s.at_risk[i]).collect();
    RawRateSurface::new(age_min, n_ages, day_min, n_days, q, w, n)
}
