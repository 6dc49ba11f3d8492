//! Sample scalars and two's-complement wrap arithmetic.
//!
//! Fixed-point values are carried as `i64` (or `i128` inside wide CIC
//! datapaths) together with a bit width. Every fixed-point operation in
//! the crate wraps modulo `2^width`, so regrouping a sum (for example the
//! adder-matrix decomposition of a prefix sum) never changes the result.

use std::fmt::Debug;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Which arithmetic a stream or pipeline runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NumericKind {
    /// Two's-complement integers at a stated width; bit-exact.
    #[default]
    Fixed,
    /// 64-bit IEEE floats; used for design and response analysis.
    Float,
}

/// Sign-extend the low `width` bits of `v`.
#[inline]
pub fn wrap_i64(v: i64, width: u32) -> i64 {
    debug_assert!((1..=64).contains(&width));
    let shift = 64 - width;
    v.wrapping_shl(shift) >> shift
}

/// Sign-extend the low `width` bits of `v`.
#[inline]
pub fn wrap_i128(v: i128, width: u32) -> i128 {
    debug_assert!((1..=128).contains(&width));
    let shift = 128 - width;
    v.wrapping_shl(shift) >> shift
}

/// Largest value representable in `width` bits.
#[inline]
pub fn max_for_width(width: u32) -> i64 {
    if width >= 64 {
        i64::MAX
    } else {
        (1i64 << (width - 1)) - 1
    }
}

/// Smallest value representable in `width` bits.
#[inline]
pub fn min_for_width(width: u32) -> i64 {
    if width >= 64 {
        i64::MIN
    } else {
        -(1i64 << (width - 1))
    }
}

/// Clamp `v` into the `width`-bit range.
#[inline]
pub fn saturate(v: i128, width: u32) -> i64 {
    v.clamp(min_for_width(width) as i128, max_for_width(width) as i128) as i64
}

/// Integer word used inside the CIC datapath.
///
/// All operations are modular; `wrap` reduces to the configured internal
/// width. Implemented for `i64` (internal width up to 64 bits) and `i128`.
pub trait Word: Copy + Default + PartialEq + Eq + Debug + Send + Sync + 'static {
    const BITS: u32;
    fn from_i64(v: i64) -> Self;
    fn to_i128(self) -> i128;
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn wrap(self, width: u32) -> Self;
}

impl Word for i64 {
    const BITS: u32 = 64;
    #[inline]
    fn from_i64(v: i64) -> Self {
        v
    }
    #[inline]
    fn to_i128(self) -> i128 {
        self as i128
    }
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.wrapping_add(rhs)
    }
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.wrapping_sub(rhs)
    }
    #[inline]
    fn wrap(self, width: u32) -> Self {
        if width >= 64 {
            self
        } else {
            wrap_i64(self, width)
        }
    }
}

impl Word for i128 {
    const BITS: u32 = 128;
    #[inline]
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    #[inline]
    fn to_i128(self) -> i128 {
        self
    }
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.wrapping_add(rhs)
    }
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.wrapping_sub(rhs)
    }
    #[inline]
    fn wrap(self, width: u32) -> Self {
        if width >= 128 {
            self
        } else {
            wrap_i128(self, width)
        }
    }
}

/// A two's-complement integer that wraps at a fixed width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedScalar {
    value: i64,
    width: u32,
}

impl FixedScalar {
    /// Wraps `value` into `width` bits. Width must be in `1..=64`.
    pub fn new(value: i64, width: u32) -> Self {
        assert!((1..=64).contains(&width), "fixed width must be in 1..=64");
        Self {
            value: wrap_i64(value, width),
            width,
        }
    }

    pub fn value(self) -> i64 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    /// Value as a fraction of full scale, in `[-1, 1)`.
    pub fn to_unit(self) -> f64 {
        self.value as f64 / (1u64 << (self.width - 1)) as f64
    }
}

impl Add for FixedScalar {
    type Output = FixedScalar;

    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "width mismatch in fixed add");
        FixedScalar::new(self.value.wrapping_add(rhs.value), self.width)
    }
}

impl Sub for FixedScalar {
    type Output = FixedScalar;

    fn sub(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "width mismatch in fixed sub");
        FixedScalar::new(self.value.wrapping_sub(rhs.value), self.width)
    }
}

impl Neg for FixedScalar {
    type Output = FixedScalar;

    fn neg(self) -> Self {
        FixedScalar::new(self.value.wrapping_neg(), self.width)
    }
}

/// One sample of either numeric kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampleScalar {
    Fixed(FixedScalar),
    Float(f64),
}

impl SampleScalar {
    pub fn kind(&self) -> NumericKind {
        match self {
            SampleScalar::Fixed(_) => NumericKind::Fixed,
            SampleScalar::Float(_) => NumericKind::Float,
        }
    }

    /// Full-scale-normalised value.
    pub fn to_unit(&self) -> f64 {
        match *self {
            SampleScalar::Fixed(f) => f.to_unit(),
            SampleScalar::Float(v) => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_i64(127, 8), 127);
        assert_eq!(wrap_i64(128, 8), -128);
        assert_eq!(wrap_i64(-129, 8), 127);
        assert_eq!(wrap_i64(i64::MAX, 64), i64::MAX);
        assert_eq!(wrap_i128(1 << 75, 76), -(1 << 75));
    }

    #[test]
    fn fixed_range_invariant() {
        let a = FixedScalar::new(32767, 16);
        let b = FixedScalar::new(1, 16);
        assert_eq!((a + b).value(), -32768);
        assert_eq!((-FixedScalar::new(-32768, 16)).value(), -32768);
        assert_eq!(FixedScalar::new(40000, 16).value(), 40000 - 65536);
    }

    #[test]
    fn saturate_bounds() {
        assert_eq!(saturate(1 << 20, 16), 32767);
        assert_eq!(saturate(-(1 << 20), 16), -32768);
        assert_eq!(saturate(-5, 16), -5);
    }

    proptest! {
        #[test]
        fn fixed_add_is_associative_and_commutative(
            a in any::<i64>(), b in any::<i64>(), c in any::<i64>(), width in 1u32..=64
        ) {
            let (a, b, c) = (
                FixedScalar::new(a, width),
                FixedScalar::new(b, width),
                FixedScalar::new(c, width),
            );
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + b, b + a);
            let v = (a + b).value();
            prop_assert!(v >= min_for_width(width) && v <= max_for_width(width));
        }

        #[test]
        fn late_wrap_equals_eager_wrap(xs in proptest::collection::vec(any::<i64>(), 1..50), width in 1u32..=64) {
            let eager = xs.iter().fold(0i64, |acc, &x| wrap_i64(acc.wrapping_add(x), width));
            let late = wrap_i64(xs.iter().fold(0i64, |acc, &x| acc.wrapping_add(x)), width);
            prop_assert_eq!(eager, late);
        }
    }
}
