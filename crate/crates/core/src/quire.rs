//! Wide two's-complement fixed-point accumulator.
//!
//! The register holds `width` significant bits with the binary point `frac_bits`
//! above the least significant bit. Every addition is checked: the running sum must
//! stay inside the signed `width`-bit range, and no nonzero bit may fall below the
//! least significant position.

use thiserror::Error;

use crate::codec::Unrounded;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuireError {
    #[error("accumulator overflow: sum needs {needed} bits, register has {width}")]
    Overflow { needed: u32, width: u32 },
    #[error("product has nonzero bits below the accumulator's least significant bit")]
    Inexact,
}

#[derive(Clone, Debug)]
pub struct Quire {
    limbs: Vec<u64>,
    width: u32,
    frac_bits: i32,
    peak_bits: u32,
}

impl Quire {
    pub fn new(width: u32, frac_bits: i32) -> Self {
        assert!(width >= 2, "quire width must be at least 2");
        // one spare limb so a single addition can never wrap the backing store
        let n_limbs = (width as usize).div_ceil(64) + 1;
        Quire { limbs: vec![0; n_limbs], width, frac_bits, peak_bits: 0 }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn frac_bits(&self) -> i32 {
        self.frac_bits
    }

    /// Widest signed width the running sum has needed so far.
    pub fn peak_bits(&self) -> u32 {
        self.peak_bits
    }

    pub fn is_negative(&self) -> bool {
        self.limbs.last().unwrap() >> 63 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    /// Adds `(-1)^negative * sig * 2^exp`.
    pub fn add(&mut self, negative: bool, sig: u128, exp: i32) -> Result<(), QuireError> {
        if sig == 0 {
            return Ok(());
        }
        let shift = exp + self.frac_bits;
        let (sig, shift) = if shift < 0 {
            let drop = (-shift) as u32;
            if drop >= 128 || sig & ((1u128 << drop) - 1) != 0 {
                return Err(QuireError::Inexact);
            }
            (sig >> drop, 0u32)
        } else {
            (sig, shift as u32)
        };
        // a term whose magnitude alone reaches 2^width cannot fit either sign
        let mag_bits = shift + (128 - sig.leading_zeros());
        if mag_bits > self.width {
            return Err(QuireError::Overflow { needed: mag_bits + 1, width: self.width });
        }
        let limb = (shift / 64) as usize;
        let bit = shift % 64;
        // spread sig << bit over three limbs
        let lo = (sig << bit) as u64;
        let mid = ((sig << bit) >> 64) as u64;
        let hi = if bit == 0 { 0 } else { (sig >> (128 - bit)) as u64 };
        let parts = [lo, mid, hi];
        if negative {
            self.sub_parts(limb, &parts);
        } else {
            self.add_parts(limb, &parts);
        }
        let needed = self.signed_bits();
        self.peak_bits = self.peak_bits.max(needed);
        if needed > self.width {
            return Err(QuireError::Overflow { needed, width: self.width });
        }
        Ok(())
    }

    fn add_parts(&mut self, start: usize, parts: &[u64; 3]) {
        let mut carry = 0u64;
        for i in start..self.limbs.len() {
            let p = parts.get(i - start).copied().unwrap_or(0);
            if p == 0 && carry == 0 && i >= start + 3 {
                break;
            }
            let (s1, c1) = self.limbs[i].overflowing_add(p);
            let (s2, c2) = s1.overflowing_add(carry);
            self.limbs[i] = s2;
            carry = (c1 || c2) as u64;
        }
    }

    fn sub_parts(&mut self, start: usize, parts: &[u64; 3]) {
        let mut borrow = 0u64;
        for i in start..self.limbs.len() {
            let p = parts.get(i - start).copied().unwrap_or(0);
            if p == 0 && borrow == 0 && i >= start + 3 {
                break;
            }
            let (s1, b1) = self.limbs[i].overflowing_sub(p);
            let (s2, b2) = s1.overflowing_sub(borrow);
            self.limbs[i] = s2;
            borrow = (b1 || b2) as u64;
        }
    }

    /// Minimal two's-complement width of the current value (1 for zero and -1).
    pub fn signed_bits(&self) -> u32 {
        let fill = if self.is_negative() { u64::MAX } else { 0 };
        for (i, &l) in self.limbs.iter().enumerate().rev() {
            let x = l ^ fill;
            if x != 0 {
                return i as u32 * 64 + (64 - x.leading_zeros()) + 1;
            }
        }
        1
    }

    fn magnitude(&self) -> Vec<u64> {
        if !self.is_negative() {
            return self.limbs.clone();
        }
        let mut out: Vec<u64> = self.limbs.iter().map(|l| !l).collect();
        for l in out.iter_mut() {
            let (s, c) = l.overflowing_add(1);
            *l = s;
            if !c {
                break;
            }
        }
        out
    }

    /// Sign and leading-zero-driven extraction of the top 128 bits of the magnitude,
    /// with every lower bit folded into `sticky`.
    pub fn extract(&self) -> Unrounded {
        let mag = self.magnitude();
        let total = mag.len() as u32 * 64;
        let lz = leading_zero_count(&mag);
        if lz == total {
            return Unrounded::ZERO;
        }
        let msb = total - 1 - lz;
        let (sig, sticky) = if msb < 128 {
            (read_bits(&mag, 0, msb + 1), false)
        } else {
            let low = msb - 127;
            (read_bits(&mag, low, 128), any_below(&mag, low))
        };
        let exp = if msb < 128 { -self.frac_bits } else { (msb - 127) as i32 - self.frac_bits };
        Unrounded::new(self.is_negative(), sig, exp, sticky)
    }
}

fn leading_zero_count(limbs: &[u64]) -> u32 {
    let mut count = 0;
    for &l in limbs.iter().rev() {
        if l == 0 {
            count += 64;
        } else {
            return count + l.leading_zeros();
        }
    }
    count
}

/// `len` (≤ 128) bits starting at bit `start`.
fn read_bits(limbs: &[u64], start: u32, len: u32) -> u128 {
    let mut out = 0u128;
    for i in 0..len {
        let pos = start + i;
        let bit = (limbs[(pos / 64) as usize] >> (pos % 64)) & 1;
        out |= (bit as u128) << i;
    }
    out
}

fn any_below(limbs: &[u64], pos: u32) -> bool {
    let full = (pos / 64) as usize;
    if limbs[..full].iter().any(|&l| l != 0) {
        return true;
    }
    let rem = pos % 64;
    rem > 0 && limbs[full] & ((1u64 << rem) - 1) != 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactValue;

    #[test]
    fn accumulates_signed_values() {
        let mut q = Quire::new(40, 8);
        q.add(false, 3, -2).unwrap(); // 0.75
        q.add(true, 1, 0).unwrap(); // -1
        assert!(q.is_negative());
        assert_eq!(q.extract().truncated_exact(), ExactValue::from_ratio(-1, 4));
        q.add(false, 1, -2).unwrap();
        assert!(q.is_zero());
        assert_eq!(q.extract(), Unrounded::ZERO);
    }

    #[test]
    fn rejects_bits_below_lsb() {
        let mut q = Quire::new(16, 2);
        assert_eq!(q.add(false, 1, -3), Err(QuireError::Inexact));
        q.add(false, 2, -3).unwrap();
    }

    #[test]
    fn detects_overflow() {
        let mut q = Quire::new(8, 0);
        q.add(false, 127, 0).unwrap();
        assert_eq!(q.signed_bits(), 8);
        assert!(matches!(q.add(false, 1, 0), Err(QuireError::Overflow { needed: 9, width: 8 })));
        let mut q = Quire::new(8, 0);
        q.add(true, 128, 0).unwrap();
        assert_eq!(q.peak_bits(), 8);
    }

    #[test]
    fn carries_across_limbs() {
        let mut q = Quire::new(200, 0);
        q.add(false, u128::MAX, 0).unwrap();
        q.add(false, 1, 0).unwrap();
        assert_eq!(q.extract().truncated_exact(), ExactValue::from_dyadic(1, 128));
        q.add(true, 1, 150).unwrap();
        let expect = ExactValue::from_dyadic(1, 128) - ExactValue::from_dyadic(1, 150);
        assert_eq!(q.extract().truncated_exact(), expect);
    }

    #[test]
    fn wide_extraction_keeps_sticky() {
        let mut q = Quire::new(300, 100);
        q.add(false, 1, 150).unwrap();
        q.add(false, 1, -100).unwrap();
        let u = q.extract();
        assert!(u.sticky);
        assert_eq!(u.truncated_exact(), ExactValue::from_dyadic(1, 150));
    }
}
