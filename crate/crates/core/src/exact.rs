//! Arbitrary-precision rationals used as the common currency between codes,
//! accumulators and the reference oracle.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// An exact rational number kept in canonical form (gcd 1, positive denominator).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExactValue(BigRational);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseExactError {
    #[error("empty numeric literal")]
    Empty,
    #[error("malformed numeric literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

impl ExactValue {
    pub fn zero() -> Self {
        ExactValue(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactValue(BigRational::one())
    }

    pub fn from_integer(v: i64) -> Self {
        ExactValue(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        ExactValue(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    /// `mantissa * 2^exp`.
    pub fn from_dyadic(mantissa: impl Into<BigInt>, exp: i32) -> Self {
        let m: BigInt = mantissa.into();
        if exp >= 0 {
            ExactValue(BigRational::from_integer(m << exp as usize))
        } else {
            ExactValue(BigRational::new(m, BigInt::one() << (-exp) as usize))
        }
    }

    /// Exact value of a finite double. Panics on NaN or infinity.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite value {v}");
        if v == 0.0 {
            return Self::zero();
        }
        let bits = v.to_bits();
        let negative = bits >> 63 == 1;
        let exp_field = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if exp_field == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp_field - 1075)
        };
        let m = BigInt::from(mant);
        Self::from_dyadic(if negative { -m } else { m }, exp)
    }

    pub fn from_rational(r: BigRational) -> Self {
        ExactValue(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        ExactValue(self.0.abs())
    }

    pub fn signum(&self) -> i32 {
        match self.0.numer().sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    /// `floor(self * 2^shift)` as an integer.
    pub fn floor_scaled(&self, shift: i32) -> BigInt {
        let (n, d) = self.scaled_parts(shift);
        n.div_floor(&d)
    }

    /// Splits `|self| * 2^shift` into `(floor, remainder_is_nonzero)`.
    pub fn abs_scaled_floor(&self, shift: i32) -> (BigInt, bool) {
        let (n, d) = self.scaled_parts(shift);
        let (q, r) = n.abs().div_rem(&d);
        (q, !r.is_zero())
    }

    fn scaled_parts(&self, shift: i32) -> (BigInt, BigInt) {
        let mut n = self.0.numer().clone();
        let mut d = self.0.denom().clone();
        if shift >= 0 {
            n <<= shift as usize;
        } else {
            d <<= (-shift) as usize;
        }
        (n, d)
    }

    /// floor(log2 |self|); `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let n = self.0.numer().abs();
        let d = self.0.denom();
        let mut e = n.bits() as i64 - d.bits() as i64;
        // 2^e <= n/d < 2^(e+1) after at most one correction
        let (lhs, rhs) = if e >= 0 {
            (n.clone(), d.clone() << e as usize)
        } else {
            (n.clone() << (-e) as usize, d.clone())
        };
        if lhs < rhs {
            e -= 1;
        }
        Some(e)
    }

    /// Nearest double (ties-to-even are not guaranteed; used only for reporting and logits).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let n = self.0.numer().to_f64();
        let d = self.0.denom().to_f64();
        match (n, d) {
            (Some(n), Some(d)) if n.is_finite() && d.is_finite() && d != 0.0 => n / d,
            _ => {
                // scale into range first
                let e = self.floor_log2().unwrap();
                let (m, _) = self.abs_scaled_floor(60 - e as i32);
                let v = m.to_f64().unwrap() * 2f64.powi(e as i32 - 60);
                if self.is_negative() {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// Decimal literal when the value has a terminating expansion, otherwise `p/q`.
    pub fn to_decimal_string(&self) -> String {
        let d = self.0.denom().clone();
        let (twos, fives, rest) = {
            let mut rest = d.clone();
            let two = BigInt::from(2);
            let five = BigInt::from(5);
            let mut twos = 0u32;
            let mut fives = 0u32;
            while rest.is_even() {
                rest /= &two;
                twos += 1;
            }
            while (&rest % &five).is_zero() {
                rest /= &five;
                fives += 1;
            }
            (twos, fives, rest)
        };
        if !rest.is_one() {
            return format!("{}/{}", self.0.numer(), d);
        }
        let digits = twos.max(fives);
        if digits == 0 {
            return self.0.numer().to_string();
        }
        let scaled = self.0.numer() * num_traits::pow(BigInt::from(10), digits as usize) / &d;
        let negative = scaled.is_negative();
        let mut s = scaled.abs().to_string();
        let digits = digits as usize;
        if s.len() <= digits {
            s = format!("{}{}", "0".repeat(digits - s.len() + 1), s);
        }
        let (int, frac) = s.split_at(s.len() - digits);
        format!("{}{}.{}", if negative { "-" } else { "" }, int, frac)
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl FromStr for ExactValue {
    type Err = ParseExactError;

    /// Accepts integers, `p/q` ratios and decimal literals with an optional exponent
    /// (`-1.25`, `3e-2`, `7/16`). Decimal literals are read exactly, not via f64.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseExactError::Empty);
        }
        let bad = || ParseExactError::Malformed(s.to_string());
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(ParseExactError::ZeroDenominator(s.to_string()));
            }
            return Ok(ExactValue(BigRational::new(p, q)));
        }
        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (negative, body) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            numer = -numer;
        }
        let scale = exponent - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let r = if scale >= 0 {
            BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(ExactValue(r))
    }
}

impl Add for ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: ExactValue) -> ExactValue {
        ExactValue(self.0 + rhs.0)
    }
}

impl Add<&ExactValue> for &ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 + &rhs.0)
    }
}

impl AddAssign<&ExactValue> for ExactValue {
    fn add_assign(&mut self, rhs: &ExactValue) {
        self.0 += &rhs.0;
    }
}

impl Sub for ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: ExactValue) -> ExactValue {
        ExactValue(self.0 - rhs.0)
    }
}

impl Sub<&ExactValue> for &ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 - &rhs.0)
    }
}

impl Mul for ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: ExactValue) -> ExactValue {
        ExactValue(self.0 * rhs.0)
    }
}

impl Mul<&ExactValue> for &ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 * &rhs.0)
    }
}

impl Neg for ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        ExactValue(-self.0)
    }
}

impl std::iter::Sum for ExactValue {
    fn sum<I: Iterator<Item = ExactValue>>(iter: I) -> Self {
        iter.fold(ExactValue::zero(), |acc, v| acc + v)
    }
}

/// Compares `|a|` against `|b|`.
pub fn cmp_abs(a: &ExactValue, b: &ExactValue) -> Ordering {
    a.0.abs().cmp(&b.0.abs())
}
