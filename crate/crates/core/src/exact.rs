//! Exact accumulation of `f64` values.
//!
//! Masses and energies are sums of many atom weights; summing them in an exact
//! fixed-point representation makes additivity over disjoint direction sets an
//! identity instead of an approximation, and makes every sum independent of
//! iteration order and worker count.

use std::ops::{Add, AddAssign, Sub};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Values are stored as integers in units of `2^-SCALE_BITS`.
const SCALE_BITS: i32 = 600;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactSum {
    units: BigInt,
}

impl ExactSum {
    pub fn zero() -> Self {
        ExactSum { units: BigInt::zero() }
    }

    pub fn from_f64(value: f64) -> Self {
        let mut s = Self::zero();
        s.add_f64(value);
        s
    }

    pub fn is_zero(&self) -> bool {
        self.units.is_zero()
    }

    /// Adds `value` exactly. Panics on non-finite input or on magnitudes below `2^-548`.
    pub fn add_f64(&mut self, value: f64) {
        assert!(value.is_finite(), "cannot accumulate non-finite value {value}");
        if value == 0.0 {
            return;
        }
        let bits = value.to_bits();
        let negative = bits >> 63 == 1;
        let exp_field = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exp_field == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp_field - 1075)
        };
        let shift = exp + SCALE_BITS;
        let mut v = BigInt::from(mantissa);
        if shift >= 0 {
            v <<= shift as usize;
        } else {
            let lost = mantissa & ((1u64 << (-shift).min(63)) - 1);
            assert!(lost == 0, "value {value} too small for exact accumulation");
            v >>= (-shift) as usize;
        }
        if negative {
            self.units -= v;
        } else {
            self.units += v;
        }
    }

    /// Multiplies by a positive integer (used for the `ρ^{-k}` weights when `ρ = 1/b`).
    pub fn scaled(&self, factor: u64) -> Self {
        ExactSum {
            units: &self.units * BigInt::from(factor),
        }
    }

    /// Correctly rounded conversion.
    pub fn to_f64(&self) -> f64 {
        if self.units.is_zero() {
            return 0.0;
        }
        let magnitude = self.units.abs();
        let bits = magnitude.bits() as i64;
        // Bring the integer below 2^1000 so the conversion cannot overflow, then rescale.
        let (reduced, extra) = if bits > 1000 {
            let drop = (bits - 1000) as usize;
            let low_nonzero = magnitude.trailing_zeros().is_some_and(|t| (t as usize) < drop);
            let mut r: BigInt = &magnitude >> drop;
            if low_nonzero {
                r |= BigInt::from(1u8);
            }
            (r, drop as i32)
        } else {
            (magnitude, 0)
        };
        let base = reduced.to_f64().expect("finite after reduction");
        let scaled = base * 2f64.powi(extra - SCALE_BITS / 2) * 2f64.powi(-SCALE_BITS / 2);
        if self.units.is_negative() {
            -scaled
        } else {
            scaled
        }
    }
}

impl AddAssign<&ExactSum> for ExactSum {
    fn add_assign(&mut self, rhs: &ExactSum) {
        self.units += &rhs.units;
    }
}

impl Add for &ExactSum {
    type Output = ExactSum;
    fn add(self, rhs: &ExactSum) -> ExactSum {
        ExactSum {
            units: &self.units + &rhs.units,
        }
    }
}

impl Sub for &ExactSum {
    type Output = ExactSum;
    fn sub(self, rhs: &ExactSum) -> ExactSum {
        ExactSum {
            units: &self.units - &rhs.units,
        }
    }
}

impl std::iter::Sum<f64> for ExactSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::zero();
        for v in iter {
            s.add_f64(v);
        }
        s
    }
}

/// Exactly rounded sum of a slice.
pub fn exact_sum(values: &[f64]) -> f64 {
    values.iter().copied().sum::<ExactSum>().to_f64()
}
