//! Floating point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the dense, sparse, autodiff and model code is generic over.
///
/// Implemented for `f32` and `f64`. Experiment code runs in `f64`: Euler
/// rollouts over thousands of steps accumulate rounding error quickly in
/// single precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or hyperparameter into this scalar type.
    fn of(v: f64) -> Self;

    /// Widens to `f64` (exact for both implementors).
    fn to_f64_exact(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_exact(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_exact(self) -> f64 {
        self
    }
}
