//! Grouped chi-square goodness of fit of a graduated surface.
//!
//! Observed exits `D` and model-expected exits `D~ = sum n q^` are
//! aggregated over age classes and duration classes. Two statistics are
//! computed from the same counts:
//!
//! * [`Reading::Marginal`]: the age-class statistic plus the duration-class
//!   statistic, i.e. `l + k` classes, referred to chi-square with
//!   `k + l - 2` degrees of freedom.
//! * [`Reading::Cells`]: the double sum over all `k * l` two-dimensional
//!   cells, referred to the same `k + l - 2` degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::ingest::CohortData;
use crate::rates::DailyRates;

/// Classes with fewer expected exits are merged into a neighbour.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("invalid class grouping: {0}")]
    Grouping(String),
    #[error("class (age class {age_class}, duration class {duration_class}) has no exposure")]
    EmptyExposure { age_class: usize, duration_class: usize },
    #[error("sparse classes cannot be merged: total expected exits {0} below {MIN_EXPECTED}")]
    Unmergeable(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    NonPositiveDf(i64),
    #[error("level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("length mismatch: {0}")]
    Shape(String),
}

/// Age and duration class boundaries. Class `i` covers `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGrouping {
    pub age_edges: Vec<i32>,
    pub day_edges: Vec<u32>,
}

impl Default for ClassGrouping {
    /// Nine age classes over 26-60 and fifteen 73-day duration classes
    /// over days 1-1095.
    fn default() -> Self {
        Self {
            age_edges: vec![26, 30, 34, 38, 42, 46, 50, 54, 58, 61],
            day_edges: (0..=15).map(|i| 1 + 73 * i).collect(),
        }
    }
}

impl ClassGrouping {
    pub fn new(age_edges: Vec<i32>, day_edges: Vec<u32>) -> Result<Self, ValidationError> {
        let g = Self { age_edges, day_edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.age_edges.len() < 2 || self.day_edges.len() < 2 {
            return Err(ValidationError::Grouping("need at least one age class and one duration class".into()));
        }
        if self.age_edges.windows(2).any(|w| w[0] >= w[1]) || self.day_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ValidationError::Grouping("class edges must be strictly increasing".into()));
        }
        if self.day_edges[0] == 0 {
            return Err(ValidationError::Grouping("durations start at day 1".into()));
        }
        Ok(())
    }

    /// Number of age classes.
    pub fn l(&self) -> usize {
        self.age_edges.len() - 1
    }

    /// Number of duration classes.
    pub fn k(&self) -> usize {
        self.day_edges.len() - 1
    }

    fn age_class(&self, age: i32) -> Option<usize> {
        class_of(&self.age_edges, age)
    }

    fn day_class(&self, day: u32) -> Option<usize> {
        class_of(&self.day_edges, day)
    }
}

fn class_of<T: PartialOrd + Copy>(edges: &[T], v: T) -> Option<usize> {
    if v < edges[0] || v >= edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|e| *e <= v) - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCell {
    pub age_class: usize,
    pub duration_class: usize,
    pub exposure: f64,
    pub observed: f64,
    pub expected: f64,
}

/// Exposure, observed and expected exits per (age class, duration class),
/// row-major by age class. Rates are clamped to [0, 1].
pub fn expected_exits<R: DailyRates + ?Sized>(
    rates: &R,
    cohort: &CohortData,
    grouping: &ClassGrouping,
) -> Result<Vec<ClassCell>, ValidationError> {
    grouping.validate()?;
    let (l, k) = (grouping.l(), grouping.k());
    let mut cells: Vec<ClassCell> = (0..l * k)
        .map(|i| ClassCell {
            age_class: i / k,
            duration_class: i % k,
            exposure: 0.0,
            observed: 0.0,
            expected: 0.0,
        })
        .collect();
    let last_day = grouping.day_edges[k].saturating_sub(1).min(cohort.horizon);
    for (&age, c) in &cohort.cohorts {
        let Some(a) = grouping.age_class(age) else { continue };
        for day in grouping.day_edges[0]..=last_day {
            let Some(t) = grouping.day_class(day) else { continue };
            let n = c.n(day);
            if n == 0 {
                continue;
            }
            let q = rates.daily_rate(age as f64, day as f64).clamp(0.0, 1.0);
            let cell = &mut cells[a * k + t];
            cell.exposure += n as f64;
            cell.observed += c.d(day) as f64;
            cell.expected += n as f64 * q;
        }
    }
    if let Some(c) = cells.iter().find(|c| c.exposure == 0.0) {
        return Err(ValidationError::EmptyExposure {
            age_class: c.age_class,
            duration_class: c.duration_class,
        });
    }
    Ok(cells)
}

/// `sum (D - D~)^2 / D~` over classes.
pub fn chi_square_stat(observed: &[f64], expected: &[f64]) -> Result<f64, ValidationError> {
    if observed.len() != expected.len() {
        return Err(ValidationError::Shape(format!("{} observed vs {} expected", observed.len(), expected.len())));
    }
    if let Some(e) = expected.iter().find(|e| !(**e > 0.0)) {
        return Err(ValidationError::Shape(format!("expected count {e} must be positive")));
    }
    Ok(observed.iter().zip(expected).map(|(d, e)| (d - e) * (d - e) / e).sum())
}

/// Groups of class indices after merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedClasses {
    pub groups: Vec<Vec<usize>>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Repeatedly merges the class with the smallest expected count below
/// [`MIN_EXPECTED`] into the adjacent group with the smaller expected count.
/// `adjacent(i, j)` tells whether original classes `i` and `j` touch.
pub fn merge_sparse(
    observed: &[f64],
    expected: &[f64],
    adjacent: impl Fn(usize, usize) -> bool,
) -> Result<MergedClasses, ValidationError> {
    let mut groups: Vec<Vec<usize>> = (0..observed.len()).map(|i| vec![i]).collect();
    let mut obs = observed.to_vec();
    let mut exp = expected.to_vec();
    loop {
        let sparse = (0..groups.len())
            .filter(|&g| exp[g] < MIN_EXPECTED)
            .min_by(|&a, &b| exp[a].total_cmp(&exp[b]).then(a.cmp(&b)));
        let Some(g) = sparse else { break };
        let neighbour = (0..groups.len())
            .filter(|&h| h != g && groups[g].iter().any(|&i| groups[h].iter().any(|&j| adjacent(i, j))))
            .min_by(|&a, &b| exp[a].total_cmp(&exp[b]).then(a.cmp(&b)));
        let Some(h) = neighbour else {
            return Err(ValidationError::Unmergeable(exp.iter().sum()));
        };
        let (keep, drop) = (g.min(h), g.max(h));
        let moved = groups.remove(drop);
        groups[keep].extend(moved);
        groups[keep].sort_unstable();
        obs[keep] += obs.remove(drop);
        exp[keep] += exp.remove(drop);
    }
    Ok(MergedClasses {
        groups,
        observed: obs,
        expected: exp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub statistic: f64,
    pub df: usize,
    pub level: f64,
    pub threshold: f64,
    pub accept: bool,
    /// `threshold - statistic`; negative on rejection.
    pub margin: f64,
}

/// Upper `level` quantile of chi-square with `df` degrees of freedom.
pub fn chi_square_quantile(df: usize, level: f64) -> Result<f64, ValidationError> {
    if df == 0 {
        return Err(ValidationError::NonPositiveDf(0));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(ValidationError::Level(level));
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| ValidationError::Grouping(e.to_string()))?;
    Ok(dist.inverse_cdf(level))
}

/// Accepts iff `w` does not exceed the chi-square quantile with
/// `k + l - 2` degrees of freedom.
pub fn chi_square_test(w: f64, k: usize, l: usize, level: f64) -> Result<TestDecision, ValidationError> {
    let df = k as i64 + l as i64 - 2;
    if df <= 0 {
        return Err(ValidationError::NonPositiveDf(df));
    }
    let threshold = chi_square_quantile(df as usize, level)?;
    Ok(TestDecision {
        statistic: w,
        df: df as usize,
        level,
        threshold,
        accept: w <= threshold,
        margin: threshold - w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    #[default]
    Marginal,
    Cells,
}

impl std::str::FromStr for Reading {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "marginal" => Ok(Reading::Marginal),
            "cells" => Ok(Reading::Cells),
            other => Err(ValidationError::Grouping(format!("unknown statistic `{other}` (marginal|cells)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticReport {
    pub classes: usize,
    pub merged_groups: Vec<Vec<usize>>,
    pub decision: TestDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub grouping: ClassGrouping,
    pub reading: Reading,
    pub decision: TestDecision,
    pub marginal: StatisticReport,
    pub cells: StatisticReport,
    pub class_cells: Vec<ClassCell>,
    pub note: String,
}

/// Runs both statistics; `reading` selects the one carried in `decision`.
pub fn validate<R: DailyRates + ?Sized>(
    rates: &R,
    cohort: &CohortData,
    grouping: &ClassGrouping,
    level: f64,
    reading: Reading,
) -> Result<ValidationReport, ValidationError> {
    let class_cells = expected_exits(rates, cohort, grouping)?;
    let (l, k) = (grouping.l(), grouping.k());

    let obs: Vec<f64> = class_cells.iter().map(|c| c.observed).collect();
    let exp: Vec<f64> = class_cells.iter().map(|c| c.expected).collect();
    let lattice = |i: usize, j: usize| {
        let (ai, ti) = (i / k, i % k);
        let (aj, tj) = (j / k, j % k);
        ai.abs_diff(aj) + ti.abs_diff(tj) == 1
    };
    let merged = merge_sparse(&obs, &exp, lattice)?;
    let w_cells = chi_square_stat(&merged.observed, &merged.expected)?;
    let cells = StatisticReport {
        classes: merged.groups.len(),
        merged_groups: merged.groups.into_iter().filter(|g| g.len() > 1).collect(),
        decision: chi_square_test(w_cells, k, l, level)?,
    };

    let mut age_obs = vec![0.0; l];
    let mut age_exp = vec![0.0; l];
    let mut dur_obs = vec![0.0; k];
    let mut dur_exp = vec![0.0; k];
    for c in &class_cells {
        age_obs[c.age_class] += c.observed;
        age_exp[c.age_class] += c.expected;
        dur_obs[c.duration_class] += c.observed;
        dur_exp[c.duration_class] += c.expected;
    }
    let line = |i: usize, j: usize| i.abs_diff(j) == 1;
    let ages = merge_sparse(&age_obs, &age_exp, line)?;
    let durs = merge_sparse(&dur_obs, &dur_exp, line)?;
    let w_marginal = chi_square_stat(&ages.observed, &ages.expected)? + chi_square_stat(&durs.observed, &durs.expected)?;
    let (l_eff, k_eff) = (ages.groups.len(), durs.groups.len());
    let mut merged_groups: Vec<Vec<usize>> = ages.groups.into_iter().filter(|g| g.len() > 1).collect();
    merged_groups.extend(durs.groups.into_iter().filter(|g| g.len() > 1).map(|g| g.into_iter().map(|i| l + i).collect()));
    let marginal = StatisticReport {
        classes: l_eff + k_eff,
        merged_groups,
        decision: chi_square_test(w_marginal, k_eff, l_eff, level)?,
    };

    let decision = match reading {
        Reading::Marginal => marginal.decision,
        Reading::Cells => cells.decision,
    };
    let note = format!(
        "degrees of freedom k + l - 2 = {}; the marginal statistic sums {} age and {} duration classes, \
         the cell statistic sums {} two-dimensional cells against the same degrees of freedom",
        k + l - 2,
        l,
        k,
        k * l
    );
    Ok(ValidationReport {
        grouping: grouping.clone(),
        reading,
        decision,
        marginal,
        cells,
        class_cells,
        note,
    })
}
