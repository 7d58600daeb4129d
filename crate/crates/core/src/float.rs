//! Scalar abstraction for the numeric core.
//!
//! All closed-form models in this crate are generic over [`Real`], so the
//! same code runs at `f32` or `f64` precision. The crate root exports
//! concrete `f64` aliases for everyday use.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the toolkit is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Pulls an `f64` constant into the working scalar type.
#[inline]
pub fn real<R: Real>(value: f64) -> R {
    R::from_f64(value).expect("f64 constant must be representable in the scalar type")
}

/// Power ratio in dB to linear scale: `10^(db/10)`.
#[inline]
pub fn db_to_linear<R: Real>(db: R) -> R {
    real::<R>(10.0).powf(db / real(10.0))
}

/// Linear power ratio to dB: `10·log10(linear)`.
#[inline]
pub fn linear_to_db<R: Real>(linear: R) -> R {
    real::<R>(10.0) * linear.log10()
}

/// Inverse hyperbolic cosine for arguments `x >= 1`.
#[inline]
pub fn acosh<R: Real>(x: R) -> R {
    (x + (x * x - R::one()).sqrt()).ln()
}

/// `ln(cosh(x))`, stable for large |x| where `cosh` itself would overflow.
#[inline]
pub fn ln_cosh<R: Real>(x: R) -> R {
    let x = x.abs();
    if x == R::zero() {
        return R::zero();
    }
    x + (-(x + x)).exp().ln_1p() - R::LN_2()
}
