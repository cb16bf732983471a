//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating point type. `f64` is what the benchmarks use; `f32` works for
//! quick-and-dirty experiments at correspondingly looser tolerances.

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` literal (tolerances, defaults).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert into the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
