//! Scalar abstraction for the numeric core.
//!
//! Everything numerical in this crate is generic over [`Real`], which is
//! satisfied by `f32` and `f64`. Concrete `f64` aliases for the main model
//! types live at the crate root; `f64` is what the CLI and the test suites
//! use.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert to the scalar type")
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::of(2.0)
    }

    #[inline]
    fn pi() -> Self {
        Self::of(std::f64::consts::PI)
    }

    /// Smallest positive value a likelihood integral is allowed to take
    /// before the log-space floor kicks in. `1e-300` for `f64`; clamped to
    /// a representable positive value for narrower scalars.
    #[inline]
    fn underflow_floor() -> Self {
        let f = Self::of(1e-300);
        if f > Self::zero() {
            f
        } else {
            Self::min_positive_value() * Self::of(1e10)
        }
    }

    /// Clamping width for probability-integral-transform values, `1e-12`
    /// for `f64` (below `f32` resolution near 1, so widened there).
    #[inline]
    fn pit_epsilon() -> Self {
        let e = Self::of(1e-12);
        if Self::one() - e < Self::one() && e > Self::zero() {
            e
        } else {
            Self::epsilon()
        }
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(f64::of(0.5), 0.5);
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(f64::two(), 2.0);
    }

    #[test]
    fn floors_are_positive() {
        assert!(f64::underflow_floor() > 0.0);
        assert!(f32::underflow_floor() > 0.0);
        assert!(f64::pit_epsilon() == 1e-12);
        assert!(f32::pit_epsilon() > 0.0);
        assert!(1.0f32 - f32::pit_epsilon() < 1.0);
    }
}
