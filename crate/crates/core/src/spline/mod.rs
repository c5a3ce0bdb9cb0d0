//! Bivariate piecewise-polynomial surfaces on rectangular knot grids.

mod constraints;
mod forms;
mod grid;
mod patch;
mod surface;

pub use constraints::{continuity_constraints, ConstraintSystem};
pub use forms::{fidelity_form, fidelity_form_points, raw_points, roughness_form, DataPoint, QuadraticForm};
pub use grid::{AxisScaling, Domain, KnotGrid};
pub use patch::{derivative_gram, hessian_gram, monomial_basis, PolyPatch};
pub use surface::{PatchFile, PiecewiseSurface, SurfaceFile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    C1,
    #[default]
    C2,
}

impl Smoothness {
    /// Highest derivative order matched across interfaces.
    pub fn order(self) -> usize {
        match self {
            Smoothness::C1 => 1,
            Smoothness::C2 => 2,
        }
    }
}

impl std::str::FromStr for Smoothness {
    type Err = SplineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c1" => Ok(Smoothness::C1),
            "c2" => Ok(Smoothness::C2),
            other => Err(SplineError::Format(format!("unknown smoothness `{other}`"))),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("invalid knots: {0}")]
    InvalidKnots(String),
    #[error("unsupported derivative order ({0}, {1}); total order must be at most 2")]
    UnsupportedOrder(usize, usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("surface file: {0}")]
    Format(String),
    #[error("all data points are masked")]
    NoData,
    #[error("data point ({t}, {x}) lies outside the domain")]
    PointOutsideDomain { t: f64, x: f64 },
    #[error("negative roughness weight {0}")]
    NegativeLambda(f64),
}
