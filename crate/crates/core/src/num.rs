//! Scalar abstraction shared by every module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point sample type: implemented for `f32` and `f64`.
///
/// Gradient checks and the round-trip tolerances quoted in the docs assume
/// `f64`; `f32` is supported for plain synthesis.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant.
    #[inline]
    fn c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable")
    }

    /// Converts an index or count.
    #[inline]
    fn n(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize is representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite value converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
