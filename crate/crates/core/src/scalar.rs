//! Scalar abstractions shared by the spline, fitting and smoothing code.
//!
//! Polynomial patch algebra only needs ring operations and small integer
//! constants, so it is written against [`Coefficient`] and works for exact
//! rationals as well as floats. Everything that factorizes matrices needs a
//! real field and is written against [`Real`].

use nalgebra::RealField;
use num_traits::{FromPrimitive, Num, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Ring scalar usable as a polynomial coefficient.
pub trait Coefficient: Num + Copy + FromPrimitive + std::fmt::Debug {
    /// Embeds a small non-negative integer.
    fn int(v: usize) -> Self {
        Self::from_usize(v).expect("small integer must be representable")
    }
}

impl<T> Coefficient for T where T: Num + Copy + FromPrimitive + std::fmt::Debug {}

/// Floating-point scalar (f32 or f64) used by the linear-algebra paths.
pub trait Real:
    RealField + Coefficient + ToPrimitive + Copy + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 must convert")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar must convert to f64")
    }
}

impl<T> Real for T where
    T: RealField + Coefficient + ToPrimitive + Copy + Send + Sync + Serialize + DeserializeOwned + 'static
{
}
