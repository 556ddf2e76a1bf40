//! Scalar abstraction. Everything numeric in the crate is generic over [`Real`].

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the simulator (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static {}

pub type Cplx<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar converts to f64")
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Cplx<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Hz to rad/s.
#[inline]
pub fn hz<T: Real>(f: f64) -> T {
    lit::<T>(f) * T::two_pi()
}

/// Degrees to radians.
#[inline]
pub fn deg<T: Real>(d: f64) -> T {
    lit::<T>(d.to_radians())
}

/// `|z|`
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
