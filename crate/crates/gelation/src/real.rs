use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar used throughout the real-valued numerics. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FftNum + Display + LowerExp + Sum + Default + Serialize + DeserializeOwned
{
}

impl<T> Real for T where
    T: Float + FloatConst + FftNum + Display + LowerExp + Sum + Default + Serialize + DeserializeOwned
{
}

/// Converts an `f64` literal to the working scalar.
#[inline(always)]
pub fn lit<F: Real>(v: f64) -> F {
    F::from(v).unwrap()
}

#[inline(always)]
pub fn to_f64<F: Real>(v: F) -> f64 {
    v.to_f64().unwrap()
}
