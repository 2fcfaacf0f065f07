//! Scalar abstraction shared by every engine.
//!
//! All particle, grid and engine code is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Error estimates, the runtime model and the
//! tuner work in `f64` only since they manipulate a handful of scalars.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point type usable by the engines.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    /// Conversion from a count or index.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }

    /// Complementary error function. Evaluated in double precision.
    #[inline]
    fn erfc(self) -> Self {
        Self::lit(libm::erfc(self.as_f64()))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A point or vector in three dimensions.
pub type Vec3<T> = [T; 3];

#[inline]
pub(crate) fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a)
}
