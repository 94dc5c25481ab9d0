//! Rounding of an unrounded binary magnitude to the nearest code of a format.
//!
//! Posit and float results use round-to-nearest by value with ties resolved to the
//! pattern whose least significant bit is zero. Magnitudes above the format maximum
//! saturate; nonzero posit magnitudes never round to zero. Fixed-point results are
//! floored to `q` fraction bits and clipped.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use super::posit::{negate_if, regime_bits};
use super::{float, posit, Code, FormatSpec};
use crate::exact::ExactValue;

/// A signed magnitude `sig * 2^exp`, plus `sticky` when the true magnitude is strictly
/// larger (by less than `2^exp`). Nonzero values keep `sig`'s top bit at position 127.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unrounded {
    pub negative: bool,
    pub sig: u128,
    pub exp: i32,
    pub sticky: bool,
}

impl Unrounded {
    pub const ZERO: Unrounded = Unrounded { negative: false, sig: 0, exp: 0, sticky: false };

    /// Builds a normalized value from a raw significand; `sticky` marks discarded nonzero bits.
    pub fn new(negative: bool, sig: u128, exp: i32, sticky: bool) -> Self {
        if sig == 0 {
            assert!(!sticky, "sticky bits below a zero significand");
            return Unrounded::ZERO;
        }
        let lz = sig.leading_zeros();
        Unrounded { negative, sig: sig << lz, exp: exp - lz as i32, sticky }
    }

    pub fn from_exact(v: &ExactValue) -> Self {
        let Some(log2) = v.floor_log2() else {
            return Unrounded::ZERO;
        };
        // scale so that the integer part has exactly 128 bits
        let shift = 127 - log2;
        let (q, rem) = v.abs_scaled_floor(shift as i32);
        let sig = q.to_u128().expect("128-bit significand");
        debug_assert_eq!(sig >> 127, 1);
        Unrounded { negative: v.is_negative(), sig, exp: -(shift as i32), sticky: rem }
    }

    pub fn is_zero(&self) -> bool {
        self.sig == 0
    }

    /// Exponent of the leading one bit.
    fn top(&self) -> i32 {
        self.exp + 127
    }

    /// Compares the magnitude with `m * 2^e`.
    fn cmp_dyadic(&self, m: u128, e: i32) -> Ordering {
        if m == 0 {
            return if self.is_zero() { Ordering::Equal } else { Ordering::Greater };
        }
        if self.is_zero() {
            return Ordering::Less;
        }
        let lz = m.leading_zeros();
        let (m, e) = (m << lz, e - lz as i32);
        self.exp
            .cmp(&e)
            .then(self.sig.cmp(&m))
            .then(if self.sticky { Ordering::Greater } else { Ordering::Equal })
    }

    /// `floor(magnitude * 2^shift)` and whether anything was discarded; `None` if it
    /// does not fit in 128 bits.
    fn scaled_floor(&self, shift: i32) -> Option<(u128, bool)> {
        let s = self.exp + shift;
        if s >= 0 {
            if s >= 128 || self.sig.leading_zeros() < s as u32 {
                return None;
            }
            Some((self.sig << s, self.sticky))
        } else if s <= -128 {
            Some((0, self.sig != 0 || self.sticky))
        } else {
            let r = (-s) as u32;
            let kept = self.sig >> r;
            let lost = self.sig & ((1u128 << r) - 1) != 0;
            Some((kept, lost || self.sticky))
        }
    }

    /// The exact value, dropping the sticky tail.
    pub fn truncated_exact(&self) -> ExactValue {
        let m = BigInt::from(self.sig);
        ExactValue::from_dyadic(if self.negative { -m } else { m }, self.exp)
    }
}

/// Rounds `u` into `spec`.
pub fn round_unrounded(u: &Unrounded, spec: FormatSpec) -> Code {
    let bits = match spec {
        FormatSpec::Posit { n, es } => round_posit(u, n, es),
        FormatSpec::Float { we, wf } => round_float(u, we, wf),
        FormatSpec::Fixed { n, q } => round_fixed(u, n, q),
    };
    Code::new(spec, bits)
}

/// Picks the nearer of two adjacent positive patterns, ties to the even pattern.
fn nearest(u: &Unrounded, lo: u64, lo_val: (u64, i32), hi_val: (u64, i32)) -> u64 {
    let ((a, x), (b, y)) = (lo_val, hi_val);
    let z = x.min(y);
    let a = (a as u128) << (x - z);
    let b = (b as u128) << (y - z);
    // midpoint = (a + b) * 2^(z-1)
    match u.cmp_dyadic(a + b, z - 1) {
        Ordering::Less => lo,
        Ordering::Greater => lo + 1,
        Ordering::Equal => {
            if lo & 1 == 0 {
                lo
            } else {
                lo + 1
            }
        }
    }
}

fn round_posit(u: &Unrounded, n: u32, es: u32) -> u64 {
    if u.is_zero() {
        return 0;
    }
    let max_k = n as i32 - 2;
    let maxpos = (1u64 << (n - 1)) - 1;
    let sf = u.top();
    let k = sf.div_euclid(1 << es);
    let e = sf.rem_euclid(1 << es) as u64;
    let magnitude = if k >= max_k {
        maxpos
    } else if k < -max_k {
        1
    } else {
        let body = n - 1;
        let (regime, rlen) = regime_bits(k, body);
        let avail = body - rlen;
        let exp_kept = es.min(avail);
        let frac_kept = avail - exp_kept;
        let exp_part = if exp_kept == 0 { 0 } else { e >> (es - exp_kept) };
        let frac_part = if frac_kept == 0 { 0 } else { ((u.sig << 1) >> (128 - frac_kept)) as u64 };
        let lo = (regime << avail) | (exp_part << frac_kept) | frac_part;
        debug_assert!(lo >= 1 && lo < maxpos);
        nearest(
            u,
            lo,
            posit::positive_pattern_value(n, es, lo),
            posit::positive_pattern_value(n, es, lo + 1),
        )
    };
    negate_if(magnitude, u.negative, n)
}

fn round_float(u: &Unrounded, we: u32, wf: u32) -> u64 {
    if u.is_zero() {
        return 0;
    }
    let max = float::max_pattern(we, wf);
    let biased = u.top() + float::bias(we);
    let lo = if biased > float::exp_max(we) as i32 {
        max
    } else if biased >= 1 {
        let frac = ((u.sig << 1) >> (128 - wf)) as u64;
        ((biased as u64) << wf) | frac
    } else {
        // subnormal range: count of min-subnormal units
        let shift = float::bias(we) - 1 + wf as i32;
        let (units, _) = u.scaled_floor(shift).expect("subnormal fits");
        units as u64
    };
    let magnitude = if lo >= max {
        max
    } else {
        nearest(
            u,
            lo,
            float::positive_pattern_value(we, wf, lo),
            float::positive_pattern_value(we, wf, lo + 1),
        )
    };
    if magnitude == 0 {
        0
    } else {
        magnitude | ((u.negative as u64) << (we + wf))
    }
}

fn round_fixed(u: &Unrounded, n: u32, q: u32) -> u64 {
    let min = -(1i128 << (n - 1));
    let max = (1i128 << (n - 1)) - 1;
    let value = match u.scaled_floor(q as i32) {
        None => {
            if u.negative {
                min
            } else {
                max
            }
        }
        Some((units, lost)) => {
            let units = units.min(1u128 << 100) as i128;
            if u.negative {
                -(units + lost as i128)
            } else {
                units
            }
        }
    };
    let clipped = value.clamp(min, max);
    (clipped as i64 as u64) & ((1u64 << n) - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes() {
        let u = Unrounded::new(true, 3, 0, false);
        assert_eq!(u.sig >> 126, 0b11);
        assert_eq!(u.exp, -126);
        assert_eq!(u.truncated_exact(), ExactValue::from_integer(-3));
    }

    #[test]
    fn from_exact_sets_sticky() {
        let u = Unrounded::from_exact(&ExactValue::from_ratio(1, 3));
        assert!(u.sticky);
        assert_eq!(u.top(), -2);
        let u = Unrounded::from_exact(&ExactValue::from_ratio(-5, 8));
        assert!(!u.sticky && u.negative);
        assert_eq!(u.truncated_exact(), ExactValue::from_ratio(-5, 8));
    }

    #[test]
    fn dyadic_comparison() {
        let u = Unrounded::new(false, 5, -1, false); // 2.5
        assert_eq!(u.cmp_dyadic(5, -1), Ordering::Equal);
        assert_eq!(u.cmp_dyadic(1, 1), Ordering::Greater);
        assert_eq!(u.cmp_dyadic(3, 0), Ordering::Less);
        let s = Unrounded::new(false, 5, -1, true);
        assert_eq!(s.cmp_dyadic(5, -1), Ordering::Greater);
    }

    #[test]
    fn fixed_floors_negative_values() {
        let spec = FormatSpec::fixed(8, 2).unwrap();
        let r = |v: ExactValue| round_unrounded(&Unrounded::from_exact(&v), spec).as_signed();
        assert_eq!(r(ExactValue::from_ratio(-1, 8)), -1);
        assert_eq!(r(ExactValue::from_ratio(1, 8)), 0);
        assert_eq!(r(ExactValue::from_integer(1000)), 127);
        assert_eq!(r(ExactValue::from_integer(-1000)), -128);
        assert_eq!(r(ExactValue::from_dyadic(1, 400)), 127);
    }
}
