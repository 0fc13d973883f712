//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;

/// Real field usable by every numerical routine in the crate.
pub trait Real: RealField + Copy + Send + Sync + 'static {}

impl<T: RealField + Copy + Send + Sync + 'static> Real for T {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts `T` back to `f64` (lossy for wider types).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    nalgebra::try_convert(x).unwrap_or(f64::NAN)
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    nalgebra::convert(n as f64)
}
