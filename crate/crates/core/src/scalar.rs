//! Numeric traits shared by the crate.
//!
//! Two families are used. [`Ring`] is the minimal algebra a polynomial
//! coefficient needs (exact rationals and symbolic parameter polynomials
//! qualify). [`Scalar`] is a real floating-point type for the numeric
//! engines (integration, saddlepoint solve, quadrature).

use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, One, Zero};

/// Commutative ring with an embedding of the integers.
pub trait Ring:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn from_int(n: i64) -> Self;
}

impl Ring for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

impl Ring for f32 {
    fn from_int(n: i64) -> Self {
        n as f32
    }
}

impl Ring for Ratio<i64> {
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(n)
    }
}

impl Ring for Ratio<i128> {
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(n as i128)
    }
}

/// Real floating-point scalar (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Ring + Display + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Scalar for f64 {}
impl Scalar for f32 {}

/// Conversion of an exact coefficient into a floating-point scalar.
pub trait ToScalar {
    fn to_scalar<T: Scalar>(&self) -> T;
}

impl ToScalar for Ratio<i64> {
    fn to_scalar<T: Scalar>(&self) -> T {
        T::lit(*self.numer() as f64) / T::lit(*self.denom() as f64)
    }
}

impl ToScalar for f64 {
    fn to_scalar<T: Scalar>(&self) -> T {
        T::lit(*self)
    }
}
