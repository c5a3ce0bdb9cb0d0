use serde::{Deserialize, Serialize};

use super::{daily_hazard, ReserveConfig, ReserveError};
use crate::quadrature::{adaptive_simpson, gauss_legendre, gauss_legendre_integrate};
use crate::rates::DailyRates;

const GL_NODES: usize = 8;
const ABS_TOL: f64 = 1e-8;
const MAX_DEPTH: usize = 40;

/// Continuous-time survival of one entry age. The force of exit over
/// elapsed day `s` is `-ln(1 - q(x, s + 1/2))`, so the unit interval
/// `[t - 1, t)` carries day `t`'s rate at its midpoint.
pub struct ContinuousSurvival<'a, R: ?Sized> {
    rates: &'a R,
    age: f64,
    cum: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    days_per_month: f64,
    pub clamp_count: usize,
}

impl<'a, R: DailyRates + ?Sized> ContinuousSurvival<'a, R> {
    pub fn new(rates: &'a R, age: f64, config: &ReserveConfig) -> Result<Self, ReserveError> {
        config.validate()?;
        let (nodes, weights) = gauss_legendre(GL_NODES);
        let days = (config.horizon_months as f64 * config.days_per_month).ceil() as usize + 1;
        let mut s = Self {
            rates,
            age,
            cum: vec![0.0; days + 1],
            nodes,
            weights,
            days_per_month: config.days_per_month,
            clamp_count: 0,
        };
        for j in 0..days {
            for &x in &s.nodes {
                let day = j as f64 + 0.5 * (x + 1.0) + 0.5;
                let q = rates.daily_rate(age, day);
                if !q.is_finite() {
                    return Err(ReserveError::Undefined { age, day });
                }
                s.clamp_count += daily_hazard(q).1 as usize;
            }
            let piece = gauss_legendre_integrate(|u| s.force(u), j as f64, j as f64 + 1.0, &s.nodes, &s.weights);
            s.cum[j + 1] = s.cum[j] + piece;
        }
        Ok(s)
    }

    /// Force of exit per day at elapsed time `s` days.
    pub fn force(&self, s: f64) -> f64 {
        daily_hazard(self.rates.daily_rate(self.age, s + 0.5)).0
    }

    /// Cumulative hazard over `[0, tau]` days.
    pub fn cumulative_hazard(&self, tau: f64) -> f64 {
        let j = (tau.floor().max(0.0) as usize).min(self.cum.len() - 1);
        let base = self.cum[j];
        if tau <= j as f64 {
            return base;
        }
        base + gauss_legendre_integrate(|u| self.force(u), j as f64, tau, &self.nodes, &self.weights)
    }

    /// `L(b) / L(a)` for elapsed months `a <= b`.
    pub fn ratio(&self, a_months: f64, b_months: f64) -> f64 {
        let ha = self.cumulative_hazard(a_months * self.days_per_month);
        let hb = self.cumulative_hazard(b_months * self.days_per_month);
        (ha - hb).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousReserve {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// `int_0^upper f(t) dt` by adaptive Simpson on unit sub-intervals, with
/// absolute tolerance `tol` shared between them.
pub fn annuity_integral(f: impl Fn(f64) -> f64, upper: f64, tol: f64) -> Result<ContinuousReserve, ReserveError> {
    let pieces = upper.ceil().max(1.0) as usize;
    let mut out = ContinuousReserve { value: 0.0, error_estimate: 0.0, evaluations: 0 };
    for k in 0..pieces {
        let a = k as f64;
        let b = ((k + 1) as f64).min(upper);
        if b <= a {
            break;
        }
        let r = adaptive_simpson(&f, a, b, tol / pieces as f64, MAX_DEPTH)?;
        out.value += r.value;
        out.error_estimate += r.error_estimate;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

fn check_y(y: f64, config: &ReserveConfig) -> Result<(), ReserveError> {
    let horizon = config.horizon_months;
    if !(0.0..=horizon as f64).contains(&y) {
        return Err(ReserveError::DurationOutOfRange { y, horizon });
    }
    Ok(())
}

/// `PM_y^x = (1 / L_y) int_0^{H-y} L_{y+t} e^{-r t / 12} dt`, `t` in months,
/// `r = ln(1 + i)` annual. `x` and `y` need not be integers.
pub fn reserve_continuous<R: DailyRates + ?Sized>(
    rates: &R,
    i: f64,
    x: f64,
    y: f64,
    config: &ReserveConfig,
) -> Result<ContinuousReserve, ReserveError> {
    check_y(y, config)?;
    if !(i >= 0.0) {
        return Err(ReserveError::Config(format!("technical rate {i} must be non-negative")));
    }
    let r = (1.0 + i).ln() / 12.0;
    let surv = ContinuousSurvival::new(rates, x, config)?;
    let h0 = surv.cumulative_hazard(y * config.days_per_month);
    let f = |t: f64| (h0 - surv.cumulative_hazard((y + t) * config.days_per_month) - r * t).exp();
    annuity_integral(f, config.horizon_months as f64 - y, ABS_TOL)
}

/// The discrete reserve sum with step `h` months on the continuous survival:
/// `h * sum_{k=0}^{N} L_{y+kh} / L_y (1+i)^{-kh/12}` with `N h = H - y`.
pub fn reserve_refined_discrete<R: DailyRates + ?Sized>(
    rates: &R,
    i: f64,
    x: f64,
    y: f64,
    h: f64,
    config: &ReserveConfig,
) -> Result<f64, ReserveError> {
    check_y(y, config)?;
    let span = config.horizon_months as f64 - y;
    let n = (span / h).round();
    if !(h > 0.0) || (n * h - span).abs() > 1e-9 * span.max(1.0) {
        return Err(ReserveError::Config(format!("step {h} does not divide the remaining horizon {span}")));
    }
    let r = (1.0 + i).ln() / 12.0;
    let surv = ContinuousSurvival::new(rates, x, config)?;
    let h0 = surv.cumulative_hazard(y * config.days_per_month);
    let sum: f64 = (0..=n as usize)
        .map(|k| {
            let t = k as f64 * h;
            (h0 - surv.cumulative_hazard((y + t) * config.days_per_month) - r * t).exp()
        })
        .sum();
    Ok(h * sum)
}

/// Observed orders `log2(e_k / e_{k+1})` of a sequence computed with
/// halving steps against `limit`.
pub fn convergence_order(values: &[f64], limit: f64) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| ((w[0] - limit).abs() / (w[1] - limit).abs()).log2())
        .collect()
}
