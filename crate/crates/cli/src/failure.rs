//! Error classification and process exit codes.

use std::fmt;
use std::path::Path;

use maintien::fitting::FitError;
use maintien::ingest::IngestError;
use maintien::io::IoError;
use maintien::reserving::ReserveError;
use maintien::spline::SplineError;
use maintien::survival::SurvivalError;
use maintien::validation::ValidationError;
use maintien::whittaker::WhError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Usage,
    Data,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Usage => 2,
            FailureKind::Data => 3,
            FailureKind::Numerical => 4,
        }
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub stage: &'static str,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: FailureKind, stage: &'static str, error: impl Into<anyhow::Error>) -> Self {
        Self { kind, stage, error: error.into() }
    }

    pub fn usage(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(FailureKind::Usage, stage, anyhow::anyhow!("{message}"))
    }

    pub fn data(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(FailureKind::Data, stage, anyhow::anyhow!("{message}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {:#}", self.stage, self.error)
    }
}

impl std::error::Error for Failure {}

pub trait Classify {
    fn kind(&self) -> FailureKind;
}

impl Classify for IngestError {
    fn kind(&self) -> FailureKind {
        match self {
            IngestError::InvalidHazard { .. } | IngestError::InvalidDesign(_) | IngestError::InvalidModelSpec { .. } => {
                FailureKind::Usage
            }
            _ => FailureKind::Data,
        }
    }
}

impl Classify for SurvivalError {
    fn kind(&self) -> FailureKind {
        FailureKind::Data
    }
}

impl Classify for SplineError {
    fn kind(&self) -> FailureKind {
        match self {
            SplineError::InvalidKnots(_) | SplineError::UnsupportedOrder(..) | SplineError::NegativeLambda(_) => {
                FailureKind::Usage
            }
            _ => FailureKind::Data,
        }
    }
}

impl Classify for FitError {
    fn kind(&self) -> FailureKind {
        match self {
            FitError::Config(_) | FitError::AffineAmbiguity => FailureKind::Usage,
            FitError::Spline(e) => e.kind(),
            FitError::Singular { .. } => FailureKind::Numerical,
            FitError::Knots(_) => FailureKind::Data,
        }
    }
}

impl Classify for WhError {
    fn kind(&self) -> FailureKind {
        match self {
            WhError::Config(_) => FailureKind::Usage,
            WhError::Singular { .. } => FailureKind::Numerical,
            WhError::Shape(_) => FailureKind::Data,
        }
    }
}

impl Classify for ValidationError {
    fn kind(&self) -> FailureKind {
        match self {
            ValidationError::Grouping(_) | ValidationError::NonPositiveDf(_) | ValidationError::Level(_) => {
                FailureKind::Usage
            }
            _ => FailureKind::Data,
        }
    }
}

impl Classify for ReserveError {
    fn kind(&self) -> FailureKind {
        match self {
            ReserveError::Config(_) | ReserveError::DurationOutOfRange { .. } | ReserveError::UnknownAge(_) => {
                FailureKind::Usage
            }
            ReserveError::ZeroCandidate { .. } | ReserveError::NoOverlap => FailureKind::Data,
            ReserveError::Fit(e) => e.kind(),
            ReserveError::Validation(e) => e.kind(),
            _ => FailureKind::Numerical,
        }
    }
}

impl Classify for IoError {
    fn kind(&self) -> FailureKind {
        FailureKind::Data
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E> StageExt<T> for Result<T, E>
where
    E: Classify + std::error::Error + Send + Sync + 'static,
{
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(e.kind(), stage, e))
    }
}

pub fn read_bytes(path: &Path, stage: &'static str) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::data(stage, format_args!("cannot read {}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8], stage: &'static str) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::data(stage, format_args!("cannot write {}: {e}", path.display())))
}

/// Runs a CSV/JSON writer into memory.
pub fn render<E>(stage: &'static str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, Failure>
where
    E: Classify + std::error::Error + Send + Sync + 'static,
{
    let mut buf = Vec::new();
    f(&mut buf).stage(stage)?;
    Ok(buf)
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable report");
    out.push(b'\n');
    out
}
