use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{daily_hazard, ReserveConfig, ReserveError};
use crate::rates::DailyRates;

/// Survivors `L_y^x`, months `0..=horizon`, from a radix at entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceTable {
    pub ages: Vec<i32>,
    pub config: ReserveConfig,
    /// One row per age, `horizon + 1` entries.
    pub survivors: Vec<Vec<f64>>,
    /// Rates clamped into `[0, 1 - eps]` while building the table.
    pub clamp_count: usize,
    /// Days evaluated outside the source's domain.
    pub extrapolated_days: usize,
}

impl MaintenanceTable {
    pub fn row(&self, age: i32) -> Result<&[f64], ReserveError> {
        self.ages
            .iter()
            .position(|&a| a == age)
            .map(|i| self.survivors[i].as_slice())
            .ok_or(ReserveError::UnknownAge(age))
    }

    pub fn horizon(&self) -> u32 {
        self.config.horizon_months
    }
}

/// Compounds daily survival up to `day(m)` for every month.
pub fn maintenance_table<R: DailyRates + Sync + ?Sized>(
    rates: &R,
    ages: &[i32],
    config: &ReserveConfig,
) -> Result<MaintenanceTable, ReserveError> {
    config.validate()?;
    let last_day = config.day_of_month(config.horizon_months);
    let rows: Vec<(Vec<f64>, usize, usize)> = ages
        .par_iter()
        .map(|&age| {
            let x = age as f64;
            let mut cum = vec![0.0; last_day as usize + 1];
            let (mut clamps, mut extrapolated) = (0, 0);
            for day in 1..=last_day {
                let t = day as f64;
                let q = rates.daily_rate(x, t);
                if !q.is_finite() {
                    return Err(ReserveError::Undefined { age: x, day: t });
                }
                let (mu, clamped) = daily_hazard(q);
                clamps += clamped as usize;
                extrapolated += rates.is_extrapolation(x, t) as usize;
                cum[day as usize] = cum[day as usize - 1] + mu;
            }
            let row = (0..=config.horizon_months)
                .map(|m| config.radix * (-cum[config.day_of_month(m) as usize]).exp())
                .collect();
            Ok((row, clamps, extrapolated))
        })
        .collect::<Result<_, _>>()?;
    let clamp_count = rows.iter().map(|r| r.1).sum();
    let extrapolated_days = rows.iter().map(|r| r.2).sum();
    if clamp_count > 0 {
        warn!("{clamp_count} daily rates clamped into [0, 1) for the maintenance table");
    }
    Ok(MaintenanceTable {
        ages: ages.to_vec(),
        config: *config,
        survivors: rows.into_iter().map(|r| r.0).collect(),
        clamp_count,
        extrapolated_days,
    })
}

/// `PM_y^x = (1 / L_y) sum_{k=0}^{H-y} L_{k+y} / (1+i)^{k/12}`.
pub fn reserve_discrete(table: &MaintenanceTable, i: f64, age: i32, y: u32) -> Result<f64, ReserveError> {
    let horizon = table.horizon();
    if y > horizon {
        return Err(ReserveError::DurationOutOfRange { y: y as f64, horizon });
    }
    if !(i > -1.0) {
        return Err(ReserveError::Config(format!("technical rate {i} must exceed -100%")));
    }
    let row = table.row(age)?;
    let ly = row[y as usize];
    if !(ly > 0.0) {
        return Err(ReserveError::NoSurvivors { age, month: y });
    }
    let v = (1.0 + i).powf(-1.0 / 12.0);
    let mut sum = 0.0;
    let mut disc = 1.0;
    for k in 0..=(horizon - y) {
        sum += row[(k + y) as usize] * disc;
        disc *= v;
    }
    Ok(sum / ly)
}

/// Reserving coefficients on an (entry age, elapsed month) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveTable {
    pub ages: Vec<i32>,
    pub months: Vec<u32>,
    /// One row per age.
    pub values: Vec<Vec<f64>>,
}

impl ReserveTable {
    pub fn get(&self, age: i32, month: u32) -> Option<f64> {
        let a = self.ages.iter().position(|&v| v == age)?;
        let m = self.months.iter().position(|&v| v == month)?;
        Some(self.values[a][m])
    }
}

pub fn reserve_table(table: &MaintenanceTable, i: f64) -> Result<ReserveTable, ReserveError> {
    let months: Vec<u32> = (0..=table.horizon()).collect();
    let values = table
        .ages
        .iter()
        .map(|&age| months.iter().map(|&y| reserve_discrete(table, i, age, y)).collect())
        .collect::<Result<_, _>>()?;
    Ok(ReserveTable {
        ages: table.ages.clone(),
        months,
        values,
    })
}

/// `(reference - candidate) / candidate` on the shared cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableComparison {
    pub table: ReserveTable,
    pub dropped_ages: Vec<i32>,
    pub dropped_months: Vec<u32>,
}

pub fn compare_tables(candidate: &ReserveTable, reference: &ReserveTable) -> Result<TableComparison, ReserveError> {
    let ages: Vec<i32> = candidate.ages.iter().copied().filter(|a| reference.ages.contains(a)).collect();
    let months: Vec<u32> = candidate.months.iter().copied().filter(|m| reference.months.contains(m)).collect();
    if ages.is_empty() || months.is_empty() {
        return Err(ReserveError::NoOverlap);
    }
    let mut values = Vec::with_capacity(ages.len());
    for &age in &ages {
        let mut row = Vec::with_capacity(months.len());
        for &month in &months {
            let c = candidate.get(age, month).expect("shared cell");
            let r = reference.get(age, month).expect("shared cell");
            if c == 0.0 {
                return Err(ReserveError::ZeroCandidate { age, month });
            }
            row.push((r - c) / c);
        }
        values.push(row);
    }
    let dropped_ages = candidate
        .ages
        .iter()
        .chain(&reference.ages)
        .copied()
        .filter(|a| !ages.contains(a))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let dropped_months = candidate
        .months
        .iter()
        .chain(&reference.months)
        .copied()
        .filter(|m| !months.contains(m))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(TableComparison {
        table: ReserveTable { ages, months, values },
        dropped_ages,
        dropped_months,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_exits_keeps_the_radix() {
        let t = maintenance_table(&|_: f64, _: f64| 0.0, &[30, 40], &ReserveConfig::default()).unwrap();
        assert!(t.survivors.iter().flatten().all(|&l| l == 10000.0));
    }

    #[test]
    fn constant_rate_is_geometric() {
        let cfg = ReserveConfig::default();
        let c = 0.002;
        let t = maintenance_table(&|_: f64, _: f64| c, &[45], &cfg).unwrap();
        for m in 0..=36 {
            let expect = 10000.0 * (1.0f64 - c).powi(cfg.day_of_month(m) as i32);
            assert!((t.survivors[0][m as usize] / expect - 1.0).abs() < 1e-12);
        }
        assert_eq!(cfg.day_of_month(36), 1096);
    }

    #[test]
    fn last_month_and_flat_table() {
        let t = maintenance_table(&|_: f64, _: f64| 0.0, &[30], &ReserveConfig::default()).unwrap();
        for y in 0..=36 {
            let pm = reserve_discrete(&t, 0.0, 30, y).unwrap();
            assert_eq!(pm, (37 - y) as f64);
            assert_eq!(reserve_discrete(&t, 0.05, 30, 36).unwrap(), 1.0);
        }
        assert!(reserve_discrete(&t, 0.0, 30, 37).is_err());
        assert!(reserve_discrete(&t, 0.0, 31, 0).is_err());
    }

    #[test]
    fn clamping_is_counted() {
        let t = maintenance_table(&|_: f64, d: f64| if d < 3.0 { -0.1 } else { 0.001 }, &[30], &ReserveConfig::default()).unwrap();
        assert_eq!(t.clamp_count, 2);
    }

    #[test]
    fn scaled_reference() {
        let cand = ReserveTable { ages: vec![30, 31], months: vec![0, 1], values: vec![vec![10.0, 9.0], vec![8.0, 7.0]] };
        let reference = ReserveTable {
            ages: vec![31, 30, 32],
            months: vec![0, 1],
            values: vec![vec![8.0 * 1.07, 7.0 * 1.07], vec![10.0 * 1.07, 9.0 * 1.07], vec![1.0, 1.0]],
        };
        let c = compare_tables(&cand, &reference).unwrap();
        assert_eq!(c.dropped_ages, vec![32]);
        for v in c.table.values.iter().flatten() {
            assert!((v - 0.07).abs() < 1e-14);
        }
    }
}
