//! Minifloat layout: sign, `we` biased exponent bits, `wf` fraction bits, with
//! subnormals. The all-ones exponent field is reserved and rejected.

use super::{CodecError, Code, FormatSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FloatClass {
    Zero,
    Subnormal,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecodedFloat {
    pub class: FloatClass,
    pub negative: bool,
    /// Biased exponent field as stored.
    pub exp: u32,
    /// Significand including the hidden bit (hidden bit 0 for subnormals).
    pub significand: u64,
}

pub fn bias(we: u32) -> i32 {
    (1 << (we - 1)) - 1
}

/// Largest exponent field a finite value may use.
pub fn exp_max(we: u32) -> u32 {
    (1 << we) - 2
}

impl DecodedFloat {
    /// Exponent applied to the integer significand: value = significand * 2^scale.
    pub fn scale(&self, we: u32, wf: u32) -> i32 {
        let effective = if self.exp == 0 { 1 } else { self.exp as i32 };
        effective - bias(we) - wf as i32
    }
}

pub fn float_decode(code: Code) -> Result<DecodedFloat, CodecError> {
    let FormatSpec::Float { we, wf } = code.spec() else {
        return Err(CodecError::WrongKind { expected: "float", found: code.spec().tag() });
    };
    let bits = code.bits();
    let negative = code.sign_bit();
    let exp = ((bits >> wf) & ((1 << we) - 1)) as u32;
    let frac = bits & ((1 << wf) - 1);
    if exp == (1 << we) - 1 {
        return Err(CodecError::ReservedFloat(code.to_string()));
    }
    let (class, significand) = match (exp, frac) {
        (0, 0) => (FloatClass::Zero, 0),
        (0, f) => (FloatClass::Subnormal, f),
        (_, f) => (FloatClass::Normal, f | (1 << wf)),
    };
    Ok(DecodedFloat { class, negative, exp, significand })
}

/// Positive pattern value as `(significand, exp)`.
pub(crate) fn positive_pattern_value(we: u32, wf: u32, bits: u64) -> (u64, i32) {
    let exp = (bits >> wf) as u32;
    let frac = bits & ((1 << wf) - 1);
    let d = DecodedFloat {
        class: FloatClass::Normal,
        negative: false,
        exp,
        significand: if exp == 0 { frac } else { frac | (1 << wf) },
    };
    (d.significand, d.scale(we, wf))
}

/// Largest finite positive pattern.
pub(crate) fn max_pattern(we: u32, wf: u32) -> u64 {
    ((exp_max(we) as u64) << wf) | ((1 << wf) - 1)
}
