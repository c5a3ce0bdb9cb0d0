//! Claim records: loading, validation, cohort construction and simulation.

mod claims;
mod cohort;
mod synthetic;

pub use claims::{load_claims, write_claims, ClaimRecord, LoadOptions, LoadedClaims, Rejection, RejectionReport};
pub use cohort::{build_cohorts, AgeCohort, CohortData};
pub use synthetic::{generate_synthetic, ParametricHazard, SyntheticDesign};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable claim source: {0}")]
    Io(#[from] std::io::Error),
    #[error("claim source is not valid delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("zero valid rows ({rejected} rejected)")]
    ZeroValidRows { rejected: usize },
    #[error("invalid hazard value {value} at age {age}, day {day}")]
    InvalidHazard { age: i32, day: u32, value: f64 },
    #[error("invalid synthetic design: {0}")]
    InvalidDesign(String),
    #[error("invalid hazard model specification `{spec}`: {reason}")]
    InvalidModelSpec { spec: String, reason: String },
}
