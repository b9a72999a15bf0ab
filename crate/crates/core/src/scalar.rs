//! Floating-point scalar abstraction for the numeric kernels.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type all numeric kernels are generic over: `f32` or `f64`.
///
/// `RealField` supplies arithmetic and elementary functions, the num-traits
/// bounds supply conversions. The extra items cover what neither provides:
/// infinities (extended-real criterion values, F quantiles at zero degrees of
/// freedom) and lossy `f64` bridging for constants and RNG draws.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Positive infinity.
    fn inf() -> Self;

    /// `true` for anything that is neither infinite nor NaN.
    fn finite(self) -> bool;

    /// Conversion from `f64`, rounding to nearest for narrower types.
    #[inline]
    fn of_f64(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    /// Widening (or identity) conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 widening")
    }

    /// Conversion from `usize` counts (run sizes, degrees of freedom).
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize conversion")
    }
}

impl Scalar for f64 {
    #[inline]
    fn inf() -> Self {
        f64::INFINITY
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    #[inline]
    fn inf() -> Self {
        f32::INFINITY
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_halves<S: Scalar>(k: usize) -> S {
        let mut acc = S::zero();
        for _ in 0..k {
            acc += S::of_f64(0.5);
        }
        acc
    }

    #[test]
    fn generic_arithmetic_works_for_both_widths() {
        assert_eq!(sum_of_halves::<f64>(4), 2.0);
        assert_eq!(sum_of_halves::<f32>(4), 2.0);
        assert!(!<f64 as Scalar>::inf().finite());
        assert_eq!(<f32 as Scalar>::of_usize(7), 7.0);
    }
}
