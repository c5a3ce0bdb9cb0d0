use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::IngestError;

/// One observed incapacity spell.
///
/// `duration_days` counts days from the first day after the franchise, so
/// day 1 is the 11th calendar day of incapacity with the default franchise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub entry_age: i32,
    pub duration_days: u32,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub age_min: i32,
    pub age_max: i32,
    /// Days of incapacity before observation starts.
    pub franchise_days: u32,
    /// When set, input durations are counted from the first calendar day and
    /// the franchise is subtracted on load.
    pub durations_include_franchise: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            age_min: 16,
            age_max: 70,
            franchise_days: 10,
            durations_include_franchise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    pub fn len(&self) -> usize {
        self.rejections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejections.is_empty()
    }

    pub fn count_reason(&self, reason: &str) -> usize {
        self.rejections.iter().filter(|r| r.reason == reason).count()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rejections {
            out.push_str(&serde_json::to_string(r).expect("rejection serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedClaims {
    pub records: Vec<ClaimRecord>,
    pub report: RejectionReport,
}

pub(crate) const REASON_MALFORMED: &str = "malformed row";
pub(crate) const REASON_TRUNCATION: &str = "duration below truncation";
pub(crate) const REASON_AGE: &str = "entry age out of range";

const REQUIRED: [&str; 3] = ["entry_age", "duration_days", "censored"];

fn parse_flag(s: &str) -> Option<bool> {
    match s {
        "0" | "false" | "FALSE" | "False" => Some(false),
        "1" | "true" | "TRUE" | "True" => Some(true),
        _ => None,
    }
}

/// Reads a delimited claim table with a header naming `entry_age`,
/// `duration_days` and `censored` (any order, extra columns ignored).
///
/// Rows that fail to parse or violate the record invariants are listed in
/// the rejection report; they never abort the load.
pub fn load_claims<R: Read>(source: R, options: &LoadOptions) -> Result<LoadedClaims, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(fatal_or_csv(e)),
    };
    let mut idx = [0usize; 3];
    let mut missing = Vec::new();
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        match headers.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(i) => *slot = i,
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(IngestError::MissingColumns(missing));
    }

    let mut records = Vec::new();
    let mut report = RejectionReport::default();
    let mut record = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                line = record.position().map(|p| p.line()).unwrap_or(line + 1);
                if record.iter().all(|f| f.is_empty()) {
                    continue;
                }
                match parse_row(&record, &idx, options) {
                    Ok(r) => records.push(r),
                    Err(reason) => report.rejections.push(Rejection {
                        line,
                        reason: reason.to_string(),
                    }),
                }
            }
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(fatal_or_csv(e));
                }
                line = e.position().map(|p| p.line()).unwrap_or(line + 1);
                report.rejections.push(Rejection {
                    line,
                    reason: REASON_MALFORMED.to_string(),
                });
            }
        }
    }

    if records.is_empty() {
        return Err(IngestError::ZeroValidRows {
            rejected: report.len(),
        });
    }
    Ok(LoadedClaims { records, report })
}

fn fatal_or_csv(e: csv::Error) -> IngestError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            _ => unreachable!(),
        }
    } else {
        IngestError::Csv(e)
    }
}

fn parse_row(
    record: &csv::StringRecord,
    idx: &[usize; 3],
    options: &LoadOptions,
) -> Result<ClaimRecord, &'static str> {
    let field = |i: usize| record.get(i).ok_or(REASON_MALFORMED);
    let age: i32 = field(idx[0])?.parse().map_err(|_| REASON_MALFORMED)?;
    let raw_duration: i64 = field(idx[1])?.parse().map_err(|_| REASON_MALFORMED)?;
    let censored = parse_flag(field(idx[2])?).ok_or(REASON_MALFORMED)?;

    let duration = if options.durations_include_franchise {
        raw_duration - options.franchise_days as i64
    } else {
        raw_duration
    };
    if duration < 1 {
        return Err(REASON_TRUNCATION);
    }
    if age < options.age_min || age > options.age_max {
        return Err(REASON_AGE);
    }
    let duration_days = u32::try_from(duration).map_err(|_| REASON_MALFORMED)?;
    Ok(ClaimRecord {
        entry_age: age,
        duration_days,
        censored,
    })
}

/// Writes records in the canonical three-column layout.
pub fn write_claims<W: Write>(records: &[ClaimRecord], sink: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(REQUIRED)?;
    for r in records {
        w.write_record([
            r.entry_age.to_string(),
            r.duration_days.to_string(),
            if r.censored { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
