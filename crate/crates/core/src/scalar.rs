//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All matrix code is written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex entries are `Complex<T>`.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar usable by the linear algebra in this crate.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default {
    /// Smallest tolerance that is meaningful at this precision.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Lossy conversion from an `f64` literal or constant.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in every Real")
}

/// Conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize is representable in every Real")
}

/// Unit-modulus complex number `e^{j theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Phase factor of `z`, with the convention that zero maps to `1`.
#[inline]
pub fn unit_phase<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = z.modulus();
    if r > T::zero() {
        z / Complex::new(r, T::zero())
    } else {
        Complex::new(T::one(), T::zero())
    }
}
