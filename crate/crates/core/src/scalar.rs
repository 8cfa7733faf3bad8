//! Scalar abstractions shared by the numeric kernels.
//!
//! `Scalar` is the minimal field-like bound (exact rationals qualify), while
//! `Real` adds the transcendental operations needed by the cost function,
//! acceptance rule and IPF.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// A number usable in counting/ratio arithmetic: f32, f64 or an exact rational.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn from_count(n: usize) -> Self;
    fn from_f64_lossy(x: f64) -> Self;
    fn to_f64_lossy(&self) -> f64;
}

/// Floating point scalar: f32 or f64.
pub trait Real: Scalar + Float + NumAssign + FromPrimitive + ToPrimitive + Copy + Default {}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Real for f32 {}
impl Real for f64 {}

macro_rules! ratio_scalar {
    ($int:ty) => {
        impl Scalar for Ratio<$int> {
            fn from_count(n: usize) -> Self {
                Ratio::from_integer(n as $int)
            }
            fn from_f64_lossy(x: f64) -> Self {
                Ratio::<$int>::approximate_float(x).expect("representable value")
            }
            fn to_f64_lossy(&self) -> f64 {
                ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
            }
        }
    };
}

ratio_scalar!(i64);
ratio_scalar!(i128);
