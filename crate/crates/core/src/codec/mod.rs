//! Bit-exact encode, decode, round and inspect for posit, float and fixed-point formats.

mod float;
mod format;
mod posit;
mod round;

use num_bigint::BigInt;
use thiserror::Error;

use crate::exact::ExactValue;

pub use float::{bias as float_bias, float_decode, DecodedFloat, FloatClass};
pub use format::{Code, FormatKind, FormatSpec};
pub use posit::{fraction_bits as posit_fraction_bits, posit_decode, posit_encode, DecodedPosit, PositClass};
pub use round::{round_unrounded, Unrounded};


#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid format parameters: {0}")]
    InvalidSpec(String),
    #[error("unknown format tag `{0}` (expected e.g. posit8es0, float8e4, fixed8q4)")]
    UnknownFormatTag(String),
    #[error("bit pattern {bits:#x} does not fit in {spec}")]
    BitsOutOfRange { bits: u64, spec: String },
    #[error("expected a {expected} code, got {found}")]
    WrongKind { expected: &'static str, found: String },
    #[error("not representable: {0}")]
    NotRepresentable(String),
    #[error("NaR has no real value")]
    NaR,
    #[error("reserved float pattern {0} (NaN/Inf are not supported)")]
    ReservedFloat(String),
}

/// Exact value of a code. Posit NaR and reserved float patterns are errors.
pub fn code_to_exact(code: Code) -> Result<ExactValue, CodecError> {
    match code.spec() {
        FormatSpec::Posit { n, es } => {
            let d = posit_decode(code)?;
            match d.class {
                PositClass::Zero => Ok(ExactValue::zero()),
                PositClass::NaR => Err(CodecError::NaR),
                PositClass::Normal => {
                    let m = BigInt::from(d.fraction);
                    let exp = d.scale(es) - posit_fraction_bits(n, es) as i32;
                    Ok(ExactValue::from_dyadic(if d.negative { -m } else { m }, exp))
                }
            }
        }
        FormatSpec::Float { we, wf } => {
            let d = float_decode(code)?;
            let m = BigInt::from(d.significand);
            Ok(ExactValue::from_dyadic(if d.negative { -m } else { m }, d.scale(we, wf)))
        }
        FormatSpec::Fixed { q, .. } => Ok(ExactValue::from_dyadic(code.as_signed(), -(q as i32))),
    }
}

/// Rounds an exact value into `spec`: nearest with ties to even for posit and float
/// (saturating at the format maximum), floor-then-clip for fixed point.
pub fn round_to_format(v: &ExactValue, spec: FormatSpec) -> Code {
    round_unrounded(&Unrounded::from_exact(v), spec)
}

/// Largest and smallest positive representable magnitudes. For floats `min` is the
/// smallest subnormal.
pub fn format_extrema(spec: FormatSpec) -> (ExactValue, ExactValue) {
    match spec {
        FormatSpec::Posit { n, es } => {
            let useed_log2 = 1i32 << es;
            let k = n as i32 - 2;
            (ExactValue::from_dyadic(1, useed_log2 * k), ExactValue::from_dyadic(1, -useed_log2 * k))
        }
        FormatSpec::Float { we, wf } => {
            let bias = float::bias(we);
            let exp_max = float::exp_max(we) as i32;
            // 2^(exp_max - bias) * (2 - 2^-wf)
            let max_sig = (1i64 << (wf + 1)) - 1;
            let max = ExactValue::from_dyadic(max_sig, exp_max - bias - wf as i32);
            let min = ExactValue::from_dyadic(1, 1 - bias - wf as i32);
            (max, min)
        }
        FormatSpec::Fixed { n, q } => (
            ExactValue::from_dyadic((1i64 << (n - 1)) - 1, -(q as i32)),
            ExactValue::from_dyadic(1, -(q as i32)),
        ),
    }
}

/// `log10(max / min)`.
pub fn dynamic_range(spec: FormatSpec) -> f64 {
    let (max, min) = format_extrema(spec);
    let ratio = ExactValue::from_rational(max.as_rational() / min.as_rational());
    // ratio = m * 2^e with m in [1, 2)
    let e = ratio.floor_log2().expect("positive ratio");
    let (m, _) = ratio.abs_scaled_floor(60 - e as i32);
    let mantissa = num_traits::ToPrimitive::to_f64(&m).unwrap() / 2f64.powi(60);
    (mantissa.log2() + e as f64) * std::f64::consts::LOG10_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(tag: &str, bits: u64) -> Code {
        Code::new(tag.parse().unwrap(), bits)
    }

    #[test]
    fn exact_values() {
        assert_eq!(code_to_exact(code("posit8es0", 0b0111_1111)).unwrap(), ExactValue::from_integer(64));
        assert_eq!(code_to_exact(code("posit8es0", 0b0100_0000)).unwrap(), ExactValue::one());
        assert_eq!(code_to_exact(code("posit8es0", 0b0110_0000)).unwrap(), ExactValue::from_integer(2));
        assert_eq!(code_to_exact(code("posit8es0", 0b1100_0000)).unwrap(), ExactValue::from_integer(-1));
        assert_eq!(code_to_exact(code("posit8es0", 0b1000_0000)), Err(CodecError::NaR));
        assert_eq!(code_to_exact(code("float8e4", 0b0_0000_001)).unwrap(), ExactValue::from_dyadic(1, -9));
        assert_eq!(code_to_exact(code("fixed8q4", 0b0001_1000)).unwrap(), ExactValue::from_ratio(3, 2));
        assert_eq!(code_to_exact(code("fixed8q4", 0b1111_1000)).unwrap(), ExactValue::from_ratio(-1, 2));
        assert!(matches!(code_to_exact(code("float8e4", 0b0_1111_000)), Err(CodecError::ReservedFloat(_))));
    }

    #[test]
    fn extrema() {
        let ev = |tag: &str| format_extrema(tag.parse().unwrap());
        assert_eq!(ev("posit8es0"), (ExactValue::from_integer(64), ExactValue::from_ratio(1, 64)));
        assert_eq!(ev("float8e4"), (ExactValue::from_integer(240), ExactValue::from_dyadic(1, -9)));
        assert_eq!(ev("fixed8q4"), (ExactValue::from_ratio(127, 16), ExactValue::from_ratio(1, 16)));
    }

    #[test]
    fn extrema_match_codes() {
        for tag in ["posit8es0", "posit6es2", "float8e4", "float6e3", "fixed8q4", "fixed5q0"] {
            let spec: FormatSpec = tag.parse().unwrap();
            let values: Vec<ExactValue> = spec.all_codes().filter_map(|c| code_to_exact(c).ok()).collect();
            let max = values.iter().max().unwrap().clone();
            let min = values.iter().filter(|v| v.signum() > 0).min().unwrap().clone();
            assert_eq!(format_extrema(spec), (max, min), "{tag}");
        }
    }

    #[test]
    fn dynamic_ranges() {
        let dr = |tag: &str| dynamic_range(tag.parse().unwrap());
        assert!((dr("posit8es0") - 4096f64.log10()).abs() < 1e-12);
        assert!((dr("float8e4") - (240.0f64 * 512.0).log10()).abs() < 1e-12);
        assert!((dr("fixed8q4") - 127f64.log10()).abs() < 1e-12);
        assert!((dr("posit8es0") - 3.612).abs() < 1e-3);
        assert!((dr("float8e4") - 5.090).abs() < 1e-3);
        assert!((dr("fixed8q4") - 2.104).abs() < 1e-3);
    }

    #[test]
    fn rounding_examples() {
        let p8: FormatSpec = "posit8es0".parse().unwrap();
        assert_eq!(round_to_format(&ExactValue::one(), p8).bits(), 0b0100_0000);
        assert_eq!(round_to_format(&ExactValue::from_integer(100), p8).bits(), 0b0111_1111);
        assert_eq!(round_to_format(&ExactValue::from_integer(-100), p8).bits(), 0b1000_0001);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(1, -40), p8).bits(), 0b0000_0001);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(-1, -40), p8).bits(), 0b1111_1111);
        assert_eq!(round_to_format(&ExactValue::zero(), p8).bits(), 0);
        // 48 sits halfway between 32 (0111_1110) and 64 (0111_1111): even pattern wins
        assert_eq!(round_to_format(&ExactValue::from_integer(48), p8).bits(), 0b0111_1110);

        let f8: FormatSpec = "float8e4".parse().unwrap();
        assert_eq!(round_to_format(&ExactValue::from_integer(1000), f8).bits(), 0b0_1110_111);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(1, -10), f8).bits(), 0);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(3, -11), f8).bits(), 0b0_0000_001);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(-3, -10), f8).bits(), 0b1_0000_010);
        assert_eq!(round_to_format(&ExactValue::from_dyadic(-1, -12), f8).bits(), 0);
    }
}
