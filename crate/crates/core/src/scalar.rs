//! Floating-point scalar abstraction shared by the numeric kernels.
//!
//! The absorption, least-squares, covariance, marginal-effect and projection
//! code is written once against [`Scalar`] and instantiated for `f64` (the
//! default everywhere) and `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative pivot threshold below which a column counts as collinear.
    fn rank_tolerance() -> Self;

    /// Converts an `f64` literal. Panics only for values no float can hold,
    /// which cannot happen for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Scalar for f64 {
    fn rank_tolerance() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn rank_tolerance() -> Self {
        1e-5
    }
}
