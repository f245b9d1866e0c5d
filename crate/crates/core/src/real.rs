//! Scalar abstraction for all state-space and path arithmetic.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library (`f32` or `f64`).
///
/// Random variates and special functions are produced in `f64` internally and converted
/// through [`Real::of`] at the boundary, so `f32` instantiations lose precision but keep
/// identical control flow. Every shipped tolerance is stated for the `f64` instantiation.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Conversion from `f64`, for constants and sampler output.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    /// Lossy conversion to `f64`, for reports and diagnostics.
    #[inline]
    fn lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a grid/path index.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("index representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_desk_scale_values() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25f32);
        assert_eq!(f64::of_usize(7), 7.0);
        assert_eq!(2.5f64.lossy(), 2.5);
    }

    #[test]
    fn nan_survives_lossy_conversion() {
        assert!(f64::nan().lossy().is_nan());
    }
}
