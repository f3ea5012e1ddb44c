//! Scalar abstractions shared by the numeric modules.
//!
//! Descriptor, fusion and classifier code is written once over [`Real`] and
//! instantiated for `f32` and `f64`. Confusion-matrix scoring only needs field
//! arithmetic, so it is written over the weaker [`Field`] bound and also runs
//! on exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }

    /// Widens to `f64` for serialization. Lossless for `f32` and `f64`.
    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }

    /// Width tag used by the binary containers (4 or 8).
    const WIDTH: u8;
}

impl Real for f32 {
    const WIDTH: u8 = 4;
}

impl Real for f64 {
    const WIDTH: u8 = 8;
}

/// Ordered field arithmetic, enough for ratio-based scores.
///
/// Implemented for every `Num + Copy + PartialOrd + FromPrimitive` type, which
/// covers the floats as well as `num_rational::Ratio<i64>` and friends.
pub trait Field: Num + Copy + PartialOrd + FromPrimitive + Debug {
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }
}

impl<T> Field for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug {}

/// Rounds half away from zero and saturates into `0..=255`.
#[inline]
pub(crate) fn quantize_u8(v: f64) -> u8 {
    let r = v.round();
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

/// Index of the largest value, ties resolved to the lowest index.
pub(crate) fn argmax_low<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        assert_eq!(quantize_u8(76.245), 76);
        assert_eq!(quantize_u8(76.5), 77);
        assert_eq!(quantize_u8(-3.0), 0);
        assert_eq!(quantize_u8(300.0), 255);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_low(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_low(&[5, 5, 5]), 0);
    }

    #[test]
    fn widths() {
        assert_eq!(<f32 as Real>::WIDTH, 4);
        assert_eq!(f64::lit(0.5).widen(), 0.5);
    }
}
