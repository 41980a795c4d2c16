//! Numeric bounds shared by the analytic modules.
//!
//! Probability math needs transcendental functions and is written against
//! [`Scalar`] (`f32` or `f64`). Timing and buffer arithmetic only needs the
//! field operations, so it is written against [`Quantity`], which is also
//! satisfied by exact rationals such as [`num_rational::Ratio<i64>`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Any ordered field-like number usable for seconds and bit rates.
pub trait Quantity: Num + PartialOrd + Copy + FromPrimitive + ToPrimitive + Debug {}

impl<T> Quantity for T where T: Num + PartialOrd + Copy + FromPrimitive + ToPrimitive + Debug {}

/// Converts an `f64` literal into `T`.
///
/// Panics if `T` cannot represent the value, which does not happen for the
/// finite constants used in this crate.
#[inline]
pub(crate) fn lit<T: FromPrimitive>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

#[inline]
pub(crate) fn from_count<T: FromPrimitive>(n: u64) -> T {
    T::from_u64(n).expect("count not representable in scalar type")
}

/// Smallest integer `n >= 0` with `n * unit >= value`.
///
/// The float estimate is corrected with exact comparisons in `T`, so the
/// result is exact for rational inputs.
pub(crate) fn ceil_div<T: Quantity>(value: T, unit: T) -> u64 {
    if value <= T::zero() {
        return 0;
    }
    let estimate = (value / unit).to_f64().unwrap_or(0.0).ceil().max(0.0) as u64;
    let mut n = estimate;
    while n > 0 && from_count::<T>(n - 1) * unit >= value {
        n -= 1;
    }
    while from_count::<T>(n) * unit < value {
        n += 1;
    }
    n
}
