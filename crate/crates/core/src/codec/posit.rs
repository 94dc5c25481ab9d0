//! Posit (type III unum) bit-level decode and encode.

use super::{CodecError, Code, FormatSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositClass {
    Zero,
    NaR,
    Normal,
}

/// Fields extracted from a posit code.
///
/// For `Normal` codes the value is `(-1)^s * useed^regime * 2^exponent * fraction / 2^(n-es-3)`,
/// where `fraction` carries the hidden bit at position `n-es-3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecodedPosit {
    pub class: PositClass,
    pub negative: bool,
    pub regime: i32,
    pub exponent: u32,
    pub fraction: u64,
}

impl DecodedPosit {
    pub fn zero() -> Self {
        DecodedPosit { class: PositClass::Zero, negative: false, regime: 0, exponent: 0, fraction: 0 }
    }

    pub fn nar() -> Self {
        DecodedPosit { class: PositClass::NaR, negative: true, regime: 0, exponent: 0, fraction: 0 }
    }

    /// Combined binary scale `regime * 2^es + exponent`.
    pub fn scale(&self, es: u32) -> i32 {
        (self.regime << es) + self.exponent as i32
    }
}

/// Number of fraction bits below the hidden bit in a decoded fraction.
pub fn fraction_bits(n: u32, es: u32) -> u32 {
    n - es - 3
}

fn field(v: u64, hi: i32, lo: i32) -> u64 {
    if hi < lo {
        return 0;
    }
    (v >> lo) & ((1u64 << (hi - lo + 1)) - 1)
}

/// Extracts sign, regime, exponent and fraction using a two's complement of the
/// body, a regime-check bit and a single leading-zero count on the conditionally
/// inverted bits.
pub fn posit_decode(code: Code) -> Result<DecodedPosit, CodecError> {
    let FormatSpec::Posit { n, es } = code.spec() else {
        return Err(CodecError::WrongKind { expected: "posit", found: code.spec().tag() });
    };
    let input = code.bits();
    let n = n as i32;
    let es = es as i32;
    let body_mask = (1u64 << (n - 1)) - 1;

    let nzero = input != 0;
    let sign = (input >> (n - 1)) & 1;
    let sign_fill = if sign == 1 { body_mask } else { 0 };
    let twos = ((sign_fill ^ (input & body_mask)) + sign) & body_mask;
    let rc = (twos >> (n - 2)) & 1;
    let inv = (if rc == 1 { body_mask } else { 0 }) ^ twos;
    let zc = leading_zeros_in(inv, (n - 1) as u32) as i32;

    // field of width n-3 holding exponent and fraction once the regime is shifted out
    let tmp_width = n - 3;
    let tmp = if tmp_width == 0 {
        0
    } else {
        let shift = zc - 1;
        let raw = field(twos, n - 4, 0);
        if shift >= tmp_width {
            0
        } else {
            (raw << shift) & ((1u64 << tmp_width) - 1)
        }
    };
    let frac_bits = n - es - 3;
    let fraction = ((nzero as u64) << frac_bits) | field(tmp, frac_bits - 1, 0);
    let exponent = field(tmp, n - 4, n - es - 3) as u32;
    let regime = if rc == 1 { zc - 1 } else { -zc };

    if !nzero {
        return Ok(DecodedPosit::zero());
    }
    if sign == 1 && twos == 0 {
        return Ok(DecodedPosit::nar());
    }
    Ok(DecodedPosit { class: PositClass::Normal, negative: sign == 1, regime, exponent, fraction })
}

/// Leading zeros of `v` viewed as a `width`-bit field.
pub(crate) fn leading_zeros_in(v: u64, width: u32) -> u32 {
    debug_assert!(width <= 64 && (width == 64 || v >> width == 0));
    v.leading_zeros() - (64 - width)
}

/// Inverse of [`posit_decode`] for values that fit exactly.
pub fn posit_encode(d: &DecodedPosit, spec: FormatSpec) -> Result<Code, CodecError> {
    let FormatSpec::Posit { n, es } = spec else {
        return Err(CodecError::WrongKind { expected: "posit", found: spec.tag() });
    };
    match d.class {
        PositClass::Zero => return Ok(Code::new(spec, 0)),
        PositClass::NaR => return Ok(Code::new(spec, 1u64 << (n - 1))),
        PositClass::Normal => {}
    }
    let not_representable = |why: &str| CodecError::NotRepresentable(format!("{d:?} in {}: {why}", spec.tag()));
    let max_k = n as i32 - 2;
    if d.regime > max_k || d.regime < -max_k {
        return Err(not_representable("regime out of range"));
    }
    if d.exponent >= 1 << es {
        return Err(not_representable("exponent wider than es"));
    }
    let fbits = fraction_bits(n, es);
    if d.fraction >> fbits != 1 || d.fraction >> (fbits + 1) != 0 {
        return Err(not_representable("fraction must carry exactly the hidden bit"));
    }
    let magnitude = pack_positive(n, d.regime, d.exponent as u64, es, d.fraction & ((1 << fbits) - 1), fbits)
        .ok_or_else(|| not_representable("exponent or fraction bits truncated"))?;
    Ok(Code::new(spec, negate_if(magnitude, d.negative, n)))
}

/// Packs regime, `exp_width` exponent bits and `frac_width` fraction bits into the
/// `n-1` bits after the sign. Returns `None` if any nonzero bit would be cut off.
fn pack_positive(n: u32, k: i32, exp: u64, exp_width: u32, frac: u64, frac_width: u32) -> Option<u64> {
    let body = n - 1;
    let (regime, rlen) = regime_bits(k, body);
    let avail = body - rlen;
    let tail_width = exp_width + frac_width;
    let tail = (exp << frac_width) | frac;
    let packed_tail = if tail_width <= avail {
        tail << (avail - tail_width)
    } else {
        let cut = tail_width - avail;
        if tail & ((1u64 << cut) - 1) != 0 {
            return None;
        }
        tail >> cut
    };
    Some((regime << avail) | packed_tail)
}

/// Regime bit string for `k`, clipped to `body` bits, and its length.
pub(crate) fn regime_bits(k: i32, body: u32) -> (u64, u32) {
    if k >= 0 {
        let ones = k as u32 + 1;
        if ones >= body {
            ((1u64 << body) - 1, body)
        } else {
            (((1u64 << ones) - 1) << 1, ones + 1)
        }
    } else {
        let zeros = (-k) as u32;
        (1, (zeros + 1).min(body))
    }
}

pub(crate) fn negate_if(magnitude: u64, negative: bool, n: u32) -> u64 {
    if negative {
        magnitude.wrapping_neg() & ((1u64 << n) - 1)
    } else {
        magnitude
    }
}

/// Positive dyadic value `(significand, exp)` of a positive, non-NaR posit pattern.
pub(crate) fn positive_pattern_value(n: u32, es: u32, bits: u64) -> (u64, i32) {
    let spec = FormatSpec::Posit { n, es };
    let d = posit_decode(Code::new(spec, bits)).expect("posit spec");
    debug_assert_eq!(d.class, PositClass::Normal);
    (d.fraction, d.scale(es) - fraction_bits(n, es) as i32)
}
