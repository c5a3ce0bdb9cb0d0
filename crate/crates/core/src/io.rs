//! CSV formats for raw surfaces, variances, tables and plot grids.
//!
//! Numbers are written with Rust's locale-independent formatting: shortest
//! round-trip form for raw data, a fixed number of significant digits for
//! tables.

use std::io::{Read, Write};

use thiserror::Error;

use crate::rates::RateGrid;
use crate::reserving::{MaintenanceTable, ReserveTable};
use crate::survival::{GreenwoodVariance, RawRateSurface, SurvivalCurve};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Layout(String),
}

/// `v` with `digits` significant digits in plain decimal notation.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let rounded: f64 = sci.parse().expect("round trip");
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}

fn number(v: f64) -> String {
    format!("{v}")
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, IoError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| IoError::Parse { line, message: format!("missing column `{name}`") })?;
    raw.trim().parse().map_err(|_| IoError::Parse {
        line,
        message: format!("invalid {name} `{raw}`"),
    })
}

const RAW_HEADER: [&str; 6] = ["entry_age", "day", "q", "weight", "n_at_risk", "masked"];

pub fn write_raw_surface<W: Write>(raw: &RawRateSurface, sink: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RAW_HEADER)?;
    for i in 0..raw.len() {
        let (age, day) = raw.coords(i);
        w.write_record([
            age.to_string(),
            day.to_string(),
            number(raw.q[i]),
            number(raw.weight[i]),
            number(raw.at_risk[i]),
            (raw.masked[i] as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a raw surface written by [`write_raw_surface`]. Rows may come in
/// any order but must fill a rectangular (age, day) grid.
pub fn read_raw_surface<R: Read>(source: R) -> Result<RawRateSurface, IoError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IoError::Layout(format!("missing column `{name}`")))
    };
    let (ia, id, iq, iw, ir) = (col("entry_age")?, col("day")?, col("q")?, col("weight")?, col("n_at_risk")?);
    let mut rows: Vec<(i32, u32, f64, f64, f64)> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push((
            parse_field(&rec, ia, "entry_age")?,
            parse_field(&rec, id, "day")?,
            parse_field(&rec, iq, "q")?,
            parse_field(&rec, iw, "weight")?,
            parse_field(&rec, ir, "n_at_risk")?,
        ));
    }
    let (Some(age_min), Some(age_max)) = (rows.iter().map(|r| r.0).min(), rows.iter().map(|r| r.0).max()) else {
        return Err(IoError::Layout("raw surface has no rows".into()));
    };
    let day_min = rows.iter().map(|r| r.1).min().expect("non-empty");
    let day_max = rows.iter().map(|r| r.1).max().expect("non-empty");
    let n_ages = (age_max - age_min + 1) as usize;
    let n_days = (day_max - day_min + 1) as usize;
    if rows.len() != n_ages * n_days {
        return Err(IoError::Layout(format!(
            "{} rows do not fill a {n_ages} x {n_days} grid",
            rows.len()
        )));
    }
    let mut q = vec![f64::NAN; rows.len()];
    let mut w = vec![0.0; rows.len()];
    let mut n = vec![0.0; rows.len()];
    for (age, day, qv, wv, nv) in rows {
        let i = (age - age_min) as usize * n_days + (day - day_min) as usize;
        if !q[i].is_nan() {
            return Err(IoError::Layout(format!("duplicate cell (age {age}, day {day})")));
        }
        q[i] = qv;
        w[i] = wv;
        n[i] = nv;
    }
    RawRateSurface::new(age_min, n_ages, day_min, n_days, q, w, n).map_err(|e| IoError::Layout(e.to_string()))
}

/// Long-format `entry_age,day,q` CSV of a rate grid.
pub fn write_rate_grid<W: Write>(grid: &RateGrid, sink: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["entry_age", "day", "q"])?;
    for a in 0..grid.n_ages {
        for d in 0..grid.n_days {
            w.write_record([
                (grid.age_min + a as i32).to_string(),
                (grid.day_min + d as u32).to_string(),
                number(grid.values[a * grid.n_days + d]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a grid written by [`write_rate_grid`]; rows may come in any order.
pub fn read_rate_grid<R: Read>(source: R) -> Result<RateGrid, IoError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IoError::Layout(format!("missing column `{name}`")))
    };
    let (ia, id, iq) = (col("entry_age")?, col("day")?, col("q")?);
    let mut rows: Vec<(i32, u32, f64)> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push((parse_field(&rec, ia, "entry_age")?, parse_field(&rec, id, "day")?, parse_field(&rec, iq, "q")?));
    }
    let (Some(age_min), Some(age_max)) = (rows.iter().map(|r| r.0).min(), rows.iter().map(|r| r.0).max()) else {
        return Err(IoError::Layout("rate grid has no rows".into()));
    };
    let day_min = rows.iter().map(|r| r.1).min().expect("non-empty");
    let day_max = rows.iter().map(|r| r.1).max().expect("non-empty");
    let n_ages = (age_max - age_min + 1) as usize;
    let n_days = (day_max - day_min + 1) as usize;
    if rows.len() != n_ages * n_days {
        return Err(IoError::Layout(format!("{} rows do not fill a {n_ages} x {n_days} grid", rows.len())));
    }
    let mut values = vec![f64::NAN; rows.len()];
    for (age, day, q) in rows {
        let i = (age - age_min) as usize * n_days + (day - day_min) as usize;
        if !values[i].is_nan() {
            return Err(IoError::Layout(format!("duplicate cell (age {age}, day {day})")));
        }
        if !q.is_finite() {
            return Err(IoError::Layout(format!("non-finite rate at (age {age}, day {day})")));
        }
        values[i] = q;
    }
    Ok(RateGrid::new(age_min, n_ages, day_min, n_days, values))
}

pub fn write_variance<W: Write>(estimates: &[(SurvivalCurve, GreenwoodVariance)], sink: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["entry_age", "day", "survival", "variance", "degenerate"])?;
    for (curve, var) in estimates {
        for (j, (&s, &v)) in curve.survival.iter().zip(&var.variance).enumerate() {
            let day = j as u32 + 1;
            let degenerate = var.degenerate_from.is_some_and(|d| day >= d);
            w.write_record([
                curve.age.to_string(),
                day.to_string(),
                number(s),
                number(v),
                (degenerate as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows are entry ages, columns months, values with 10 significant digits.
pub fn write_reserve_table<W: Write>(table: &ReserveTable, sink: W) -> Result<(), IoError> {
    write_age_month(&table.ages, &table.months, &table.values, sink)
}

pub fn write_maintenance_table<W: Write>(table: &MaintenanceTable, sink: W) -> Result<(), IoError> {
    let months: Vec<u32> = (0..=table.horizon()).collect();
    write_age_month(&table.ages, &months, &table.survivors, sink)
}

fn write_age_month<W: Write>(ages: &[i32], months: &[u32], values: &[Vec<f64>], sink: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["entry_age".to_string()];
    header.extend(months.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for (age, row) in ages.iter().zip(values) {
        let mut rec = vec![age.to_string()];
        rec.extend(row.iter().map(|&v| format_sig(v, 10)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an (entry age x month) table such as an external reference.
pub fn read_reserve_table<R: Read>(source: R) -> Result<ReserveTable, IoError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rd.headers()?.clone();
    if headers.len() < 2 {
        return Err(IoError::Layout("table needs an age column and at least one month column".into()));
    }
    let months = headers
        .iter()
        .skip(1)
        .map(|h| h.parse::<u32>().map_err(|_| IoError::Layout(format!("month header `{h}` is not an integer"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ages = Vec::new();
    let mut values = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != headers.len() {
            let line = rec.position().map_or(0, |p| p.line());
            return Err(IoError::Parse { line, message: format!("expected {} fields, got {}", headers.len(), rec.len()) });
        }
        ages.push(parse_field::<i32>(&rec, 0, "entry_age")?);
        values.push((1..rec.len()).map(|i| parse_field::<f64>(&rec, i, "value")).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(ReserveTable { ages, months, values })
}

/// One sample of a plot grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub x: f64,
    pub t: f64,
    pub value: f64,
    pub extrapolated: bool,
}

/// Long-format `x,t,value,extrapolated` CSV.
pub fn write_grid<W: Write>(samples: &[GridSample], sink: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "t", "value", "extrapolated"])?;
    for s in samples {
        w.write_record([number(s.x), number(s.t), number(s.value), (s.extrapolated as u8).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
