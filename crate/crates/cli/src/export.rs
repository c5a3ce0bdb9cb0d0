//! Dense plot grids from surfaces and tables.

use std::str::FromStr;

use maintien::io::GridSample;
use maintien::reserving::ReserveTable;
use maintien::DailyRates;

/// `start:end[:step]`, inclusive of `end` when it falls on the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl FromStr for Sampling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| p.parse::<f64>().map_err(|_| format!("invalid number `{p}` in sampling `{s}`"));
        let (start, end, step) = match parts.as_slice() {
            [a] => (num(a)?, num(a)?, 1.0),
            [a, b] => (num(a)?, num(b)?, 1.0),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(format!("sampling `{s}` is not start:end[:step]")),
        };
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(format!("sampling `{s}` is not finite"));
        }
        if end < start || step <= 0.0 {
            return Err(format!("sampling `{s}` is empty"));
        }
        Ok(Self { start, end, step })
    }
}

impl Sampling {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// Samples `rates` at every `(age, t)`; ages vary slowest.
pub fn sample_rates<R: DailyRates + ?Sized>(rates: &R, ages: &Sampling, days: &Sampling) -> Vec<GridSample> {
    let ts = days.points();
    ages.points()
        .into_iter()
        .flat_map(|x| {
            ts.iter().map(move |&t| GridSample {
                x,
                t,
                value: rates.daily_rate(x, t),
                extrapolated: rates.is_extrapolation(x, t),
            })
        })
        .collect()
}

/// Samples a table at integer (age, month) points; points off the table are
/// flagged and carry the nearest cell's value.
pub fn sample_table(table: &ReserveTable, ages: &Sampling, months: &Sampling) -> Vec<GridSample> {
    let nearest = |v: f64, axis: &[f64]| {
        axis.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
            .map(|(i, &a)| (i, a == v))
            .expect("non-empty table")
    };
    let age_axis: Vec<f64> = table.ages.iter().map(|&a| a as f64).collect();
    let month_axis: Vec<f64> = table.months.iter().map(|&m| m as f64).collect();
    let ts = months.points();
    ages.points()
        .into_iter()
        .flat_map(|x| {
            let (i, on_age) = nearest(x, &age_axis);
            ts.iter()
                .map(|&t| {
                    let (j, on_month) = nearest(t, &month_axis);
                    GridSample { x, t, value: table.values[i][j], extrapolated: !(on_age && on_month) }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
