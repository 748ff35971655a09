//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar the engine is generic over (`f32` or `f64`).
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Infallible for the supported float types.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon used to scale default tolerances.
    fn machine_eps() -> Self;
}

impl Scalar for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

#[inline]
pub(crate) fn cexp<T: Scalar>(z: Complex<T>) -> Complex<T> {
    ComplexField::exp(z)
}

#[inline]
pub(crate) fn csqrt<T: Scalar>(z: Complex<T>) -> Complex<T> {
    ComplexField::sqrt(z)
}

#[inline]
pub(crate) fn cabs<T: Scalar>(z: Complex<T>) -> T {
    ComplexField::modulus(z)
}

/// `e^{i x}` for real `x`.
#[inline]
pub(crate) fn cis<T: Scalar>(x: T) -> Complex<T> {
    Complex::new(x.cos(), x.sin())
}

#[inline]
pub(crate) fn cln<T: Scalar>(z: Complex<T>) -> Complex<T> {
    ComplexField::ln(z)
}
