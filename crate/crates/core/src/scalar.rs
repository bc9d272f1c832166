//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::ToPrimitive;
use rustfft::FftNum;

/// Real floating-point type the reconstruction pipeline can run on.
///
/// Implemented for `f32` and `f64`. Everything that needs an FFT, an SVD or a
/// Cholesky factorisation is written against this trait.
pub trait Scalar: RealField + FftNum + ToPrimitive + Copy + Default {
    /// Lossless (for `f64`) or rounding (for `f32`) conversion from `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        nalgebra::convert(v)
    }

    /// `|z|`, computed without intermediate overflow.
    #[inline]
    fn magnitude_of(z: &Complex<Self>) -> Self {
        z.re.hypot(z.im)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
