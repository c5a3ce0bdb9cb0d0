//! Residual maintenance expectancies and the expectancy-first graduation.
//!
//! With `e(t) = sum_{u > t} S(u) / S(t)` on the daily grid,
//! `e(t - 1) = (1 - q(t)) (1 + e(t))`, hence
//! `q(t) = 1 - e(t - 1) / (1 + e(t))`.

use log::warn;
use serde::{Deserialize, Serialize};

use super::ReserveError;
use crate::fitting::{fit_surface, FitConfig, FitOutcome, FitReport};
use crate::ingest::CohortData;
use crate::rates::RateGrid;
use crate::survival::RawRateSurface;
use crate::validation::{validate, ClassGrouping, Reading, ValidationReport};

/// Value of `e` at the last observed day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TailClosure {
    /// No maintenance beyond the horizon: `e(T) = 0`.
    Truncate,
    /// Constant daily rate beyond the horizon, equal to the mean rate of the
    /// last `window` days: `e(T) = (1 - q) / q`. An age with no exits in the
    /// window takes the exposure-weighted rate of all ages over that window.
    Geometric { window: usize },
}

impl Default for TailClosure {
    fn default() -> Self {
        TailClosure::Geometric { window: 30 }
    }
}

impl TailClosure {
    fn value(&self, q: &[f64], pooled: f64) -> Result<f64, ReserveError> {
        match *self {
            TailClosure::Truncate => Ok(0.0),
            TailClosure::Geometric { window } => {
                let w = window.clamp(1, q.len().max(1));
                let tail = &q[q.len().saturating_sub(w)..];
                let mut mean = tail.iter().map(|v| v.clamp(0.0, 1.0)).sum::<f64>() / tail.len().max(1) as f64;
                if !(mean > 0.0) {
                    mean = pooled.clamp(0.0, 1.0);
                }
                if !(mean > 0.0) {
                    return Err(ReserveError::Config("geometric tail closure needs a positive terminal rate".into()));
                }
                Ok((1.0 - mean) / mean)
            }
        }
    }
}

/// `e(t)` for `t = 0..=T` from survival values `S(0..=T)` (no tail beyond `T`).
pub fn expectancy_from_survival(s: &[f64]) -> Result<Vec<f64>, ReserveError> {
    let n = s.len();
    let mut out = vec![0.0; n];
    let mut tail = 0.0;
    for t in (0..n).rev() {
        if t + 1 < n {
            if !(s[t] > 0.0) {
                return Err(ReserveError::ZeroSurvival { age: 0, day: t as u32 });
            }
            tail += s[t + 1];
            out[t] = tail / s[t];
        }
    }
    Ok(out)
}

/// Expectancies `e(d0 - 1), ..., e(T)` from rates `q(d0), ..., q(T)`.
/// Fails with the offending day index if survival vanishes before `T`.
fn expectancy_row(q: &[f64], tail: TailClosure, pooled: f64) -> Result<Vec<f64>, Result<usize, ReserveError>> {
    let n = q.len();
    if let Some(j) = q[..n.saturating_sub(1)].iter().position(|&v| v >= 1.0) {
        return Err(Ok(j));
    }
    let mut e = vec![0.0; n + 1];
    e[n] = if q.last().is_some_and(|&v| v >= 1.0) { 0.0 } else { tail.value(q, pooled).map_err(Err)? };
    for j in (0..n).rev() {
        e[j] = (1.0 - q[j].clamp(0.0, 1.0)) * (1.0 + e[j + 1]);
    }
    Ok(e)
}

/// Residual expectancy grid from a raw surface: ages as in `raw`, days
/// `day_min - 1 ..= day_max`.
pub fn residual_expectancy(raw: &RawRateSurface, tail: TailClosure) -> Result<RateGrid, ReserveError> {
    if raw.day_min == 0 {
        return Err(ReserveError::Config("rates must start at day 1 or later".into()));
    }
    let nd = raw.n_days;
    let pooled = match tail {
        TailClosure::Geometric { window } => {
            let w = window.clamp(1, nd.max(1));
            let (mut d, mut n) = (0.0, 0.0);
            for a in 0..raw.n_ages {
                for i in a * nd + nd - w..(a + 1) * nd {
                    if !raw.masked[i] {
                        d += raw.q[i] * raw.at_risk[i];
                        n += raw.at_risk[i];
                    }
                }
            }
            if n > 0.0 { d / n } else { 0.0 }
        }
        TailClosure::Truncate => 0.0,
    };
    let mut values = Vec::with_capacity(raw.n_ages * (nd + 1));
    for a in 0..raw.n_ages {
        let row = &raw.q[a * nd..(a + 1) * nd];
        let e = expectancy_row(row, tail, pooled).map_err(|e| match e {
            Ok(j) => ReserveError::ZeroSurvival {
                age: raw.age_min + a as i32,
                day: raw.day_min + j as u32,
            },
            Err(err) => err,
        })?;
        values.extend(e);
    }
    Ok(RateGrid::new(raw.age_min, raw.n_ages, raw.day_min - 1, nd + 1, values))
}

/// Rates `q(t) = 1 - e(t-1) / (1 + e(t))` from a row `e(d0 - 1 ..= T)`.
pub fn invert_expectancy(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| 1.0 - w[0] / (1.0 + w[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpectancyConfig {
    pub fit: FitConfig,
    pub tail: TailClosure,
}

#[derive(Debug, Clone)]
pub struct ExpectancyOutcome {
    /// Raw expectancies with their fitting weights.
    pub expectancy: RawRateSurface,
    /// Surface fitted to the expectancies.
    pub fit: FitOutcome<f64>,
    /// Recovered daily rates on the raw grid.
    pub rates: RateGrid,
    pub clamp_count: usize,
}

/// Computes residual expectancies, fits a surface to them and recovers the
/// daily rates by inverting the expectancy recursion.
pub fn fit_expectancy_pipeline(raw: &RawRateSurface, config: &ExpectancyConfig) -> Result<ExpectancyOutcome, ReserveError> {
    let e = residual_expectancy(raw, config.tail)?;
    let nd = raw.n_days;
    let mut at_risk = Vec::with_capacity(e.values.len());
    for a in 0..raw.n_ages {
        let row = &raw.at_risk[a * nd..(a + 1) * nd];
        // Survivors at the end of day t are those at risk on day t + 1.
        at_risk.extend_from_slice(row);
        at_risk.push(row[nd - 1]);
    }
    let expectancy = RawRateSurface::new(e.age_min, e.n_ages, e.day_min, e.n_days, e.values.clone(), at_risk.clone(), at_risk)
        .map_err(|err| ReserveError::Config(err.to_string()))?;
    let fit = fit_surface(&expectancy, &config.fit)?;

    let mut values = Vec::with_capacity(raw.len());
    let mut clamp_count = 0;
    for a in 0..raw.n_ages {
        let age = raw.age_min + a as i32;
        let mut row = Vec::with_capacity(nd + 1);
        for t in e.day_min..=e.day_max() {
            let v = fit.surface.evaluate(t as f64, age as f64);
            if !(v > 0.0) {
                return Err(ReserveError::NonPositiveExpectancy { age, day: t, value: v });
            }
            row.push(v);
        }
        for q in invert_expectancy(&row) {
            let c = q.clamp(0.0, 1.0);
            clamp_count += (c != q) as usize;
            values.push(c);
        }
    }
    if clamp_count > 0 {
        warn!("{clamp_count} recovered rates clamped into [0, 1]");
    }
    Ok(ExpectancyOutcome {
        expectancy,
        fit,
        rates: RateGrid::new(raw.age_min, raw.n_ages, raw.day_min, nd, values),
        clamp_count,
    })
}

/// Chi-square validation of the direct and expectancy-first fits on the
/// same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub direct_fit: FitReport,
    pub expectancy_fit: FitReport,
    pub direct: ValidationReport,
    pub expectancy: ValidationReport,
    pub expectancy_clamp_count: usize,
}

pub fn compare_pipelines(
    raw: &RawRateSurface,
    cohort: &CohortData,
    config: &ExpectancyConfig,
    grouping: &ClassGrouping,
    level: f64,
    reading: Reading,
) -> Result<PipelineComparison, ReserveError> {
    let direct = fit_surface(raw, &config.fit)?;
    let alt = fit_expectancy_pipeline(raw, config)?;
    Ok(PipelineComparison {
        direct: validate(&direct.surface, cohort, grouping, level, reading)?,
        expectancy: validate(&alt.rates, cohort, grouping, level, reading)?,
        direct_fit: direct.report,
        expectancy_fit: alt.fit.report,
        expectancy_clamp_count: alt.clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::KnotSpec;

    fn constant_raw(c: f64, ages: usize, days: usize) -> RawRateSurface {
        let len = ages * days;
        RawRateSurface::from_weighted(30, ages, 1, days, vec![c; len], vec![1.0; len]).unwrap()
    }

    #[test]
    fn immediate_exit_gives_zero() {
        let e = expectancy_row(&[0.2, 1.0], TailClosure::Truncate, 0.0).unwrap();
        assert_eq!(e[1], 0.0);
        assert!(expectancy_row(&[1.0, 0.2], TailClosure::Truncate, 0.0).is_err());
    }

    #[test]
    fn truncated_geometric_sum() {
        let c = 0.01;
        let n = 200;
        let e = expectancy_row(&vec![c; n], TailClosure::Truncate, 0.0).unwrap();
        let oracle: f64 = (1..=n).map(|j| (1.0f64 - c).powi(j as i32)).sum();
        assert!((e[0] - oracle).abs() < 1e-10);
        let e = expectancy_row(&vec![c; n], TailClosure::default(), 0.0).unwrap();
        for v in e {
            assert!((v - (1.0 - c) / c).abs() < 1e-9);
        }
    }

    #[test]
    fn silent_tail_uses_the_pooled_rate() {
        let e = expectancy_row(&[0.1, 0.0, 0.0], TailClosure::Geometric { window: 2 }, 0.05).unwrap();
        assert!((e[3] - 19.0).abs() < 1e-12);
        assert!(expectancy_row(&[0.1, 0.0], TailClosure::Geometric { window: 1 }, 0.0).is_err());
    }

    #[test]
    fn higher_rates_shorten_expectancy() {
        let lo = expectancy_row(&[0.1, 0.2], TailClosure::Truncate, 0.0).unwrap();
        let hi = expectancy_row(&[0.3, 0.2], TailClosure::Truncate, 0.0).unwrap();
        assert!(hi[0] < lo[0]);
    }

    #[test]
    fn survival_route_agrees_with_recursion() {
        let q = [0.1, 0.05, 0.2, 0.3];
        let mut s = vec![1.0];
        for v in q {
            s.push(s.last().unwrap() * (1.0 - v));
        }
        let a = expectancy_from_survival(&s).unwrap();
        let b = expectancy_row(&q, TailClosure::Truncate, 0.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_hazard_round_trip() {
        let c = 0.004;
        let raw = constant_raw(c, 8, 120);
        let cfg = ExpectancyConfig {
            fit: FitConfig { knots: KnotSpec::Auto { h: 1, v: 2 }, ..FitConfig::default() },
            ..ExpectancyConfig::default()
        };
        let out = fit_expectancy_pipeline(&raw, &cfg).unwrap();
        for v in &out.rates.values {
            assert!((v - c).abs() < 1e-6);
        }
    }
}
