//! Exact multiply-and-accumulate units.
//!
//! Every product is added into a [`Quire`] without rounding; a single rounding step
//! converts the final sum back into the operand format. The register width comes from
//! the Kulisch formula (fixed and float) or the posit quire formula, and overflow past
//! that width is reported rather than wrapped.

use thiserror::Error;

use crate::codec::{
    float_decode, format_extrema, posit_decode, posit_fraction_bits, round_unrounded, Code, CodecError, FormatSpec,
    PositClass,
};
use crate::exact::ExactValue;
use crate::quire::{Quire, QuireError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmacError {
    #[error("length mismatch: {weights} weights vs {activations} activations")]
    LengthMismatch { weights: usize, activations: usize },
    #[error("{len} products exceed the configured fan-in k={k}")]
    TooManyInputs { len: usize, k: usize },
    #[error("NaR input to a posit EMAC")]
    NaRInput,
    #[error("reserved float pattern {0} as EMAC input")]
    ReservedInput(String),
    #[error("operand format {found} does not match the EMAC format {expected}")]
    WrongFormat { expected: String, found: String },
    #[error("accumulator overflow: sum needs {needed} bits, register has {width}")]
    AccumulatorOverflow { needed: u32, width: u32 },
    #[error("product bits fall below the accumulator's least significant bit")]
    InexactAlignment,
}

impl From<QuireError> for EmacError {
    fn from(e: QuireError) -> Self {
        match e {
            QuireError::Overflow { needed, width } => EmacError::AccumulatorOverflow { needed, width },
            QuireError::Inexact => EmacError::InexactAlignment,
        }
    }
}

fn ceil_log2(k: usize) -> u32 {
    assert!(k >= 1, "k must be at least 1");
    usize::BITS - (k - 1).leading_zeros()
}

fn ceil_log2_exact(v: &ExactValue) -> i64 {
    let floor = v.floor_log2().expect("positive value");
    if *v == ExactValue::from_dyadic(1, floor as i32) {
        floor
    } else {
        floor + 1
    }
}

/// Accumulator width for `k` products of a fixed or float format:
/// `ceil(log2 k) + 2 * ceil(log2(max/min)) + 2`.
pub fn kulisch_width(spec: FormatSpec, k: usize) -> u32 {
    let (max, min) = format_extrema(spec);
    let ratio = ExactValue::from_rational(max.as_rational() / min.as_rational());
    let range_bits = ceil_log2_exact(&ratio).max(0) as u32;
    ceil_log2(k) + 2 * range_bits + 2
}

/// Posit quire width for `k` products: `2^(es+2) * (n-2) + 2 + ceil(log2 k)`.
pub fn quire_width(n: u32, es: u32, k: usize) -> u32 {
    assert!(n >= 3, "posit quire needs n >= 3");
    (1u32 << (es + 2)) * (n - 2) + 2 + ceil_log2(k)
}

/// Scale-factor bias of the posit quire, `2^(es+1) * (n-2)`.
pub fn quire_bias(n: u32, es: u32) -> i32 {
    ((1u32 << (es + 1)) * (n - 2)) as i32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacConfig {
    pub spec: FormatSpec,
    pub k: usize,
    pub bias: Code,
}

impl MacConfig {
    pub fn new(spec: FormatSpec, k: usize, bias: Code) -> Self {
        assert!(k >= 1, "k must be at least 1");
        assert_eq!(bias.spec(), spec, "bias code format");
        MacConfig { spec, k, bias }
    }

    /// Configuration with a zero bias.
    pub fn unbiased(spec: FormatSpec, k: usize) -> Self {
        MacConfig::new(spec, k, spec.zero())
    }

    /// Register width and position of the binary point for this configuration.
    pub fn register(&self) -> (u32, i32) {
        match self.spec {
            FormatSpec::Posit { n, es } => (quire_width(n, es, self.k), quire_bias(n, es)),
            FormatSpec::Float { we, wf } => {
                // LSB = min subnormal squared
                let min_exp = 1 - crate::codec::float_bias(we) - wf as i32;
                (kulisch_width(self.spec, self.k), -2 * min_exp)
            }
            FormatSpec::Fixed { q, .. } => (kulisch_width(self.spec, self.k), 2 * q as i32),
        }
    }
}

/// Result code plus the widest signed intermediate observed in the accumulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacOutcome {
    pub code: Code,
    pub peak_bits: u32,
    pub width: u32,
}

fn check_inputs(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<(), EmacError> {
    if weights.len() != activations.len() {
        return Err(EmacError::LengthMismatch { weights: weights.len(), activations: activations.len() });
    }
    if weights.len() > cfg.k {
        return Err(EmacError::TooManyInputs { len: weights.len(), k: cfg.k });
    }
    for c in weights.iter().chain(activations).chain(std::iter::once(&cfg.bias)) {
        if c.spec() != cfg.spec {
            return Err(EmacError::WrongFormat { expected: cfg.spec.tag(), found: c.spec().tag() });
        }
    }
    Ok(())
}

fn finish(quire: &Quire, spec: FormatSpec) -> MacOutcome {
    let code = round_unrounded(&quire.extract(), spec);
    MacOutcome { code, peak_bits: quire.peak_bits(), width: quire.width() }
}

/// Fixed-point EMAC: full `2n`-bit integer products, summed exactly, then shifted
/// right by `q` (floor) and clipped to the `n`-bit range.
pub fn fixed_emac_traced(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<MacOutcome, EmacError> {
    let FormatSpec::Fixed { q, .. } = cfg.spec else {
        return Err(EmacError::WrongFormat { expected: "fixed".into(), found: cfg.spec.tag() });
    };
    check_inputs(weights, activations, cfg)?;
    let (width, frac) = cfg.register();
    let mut quire = Quire::new(width, frac);
    let b = cfg.bias.as_signed();
    quire.add(b < 0, b.unsigned_abs() as u128, -(q as i32))?;
    for (w, a) in weights.iter().zip(activations) {
        let p = w.as_signed() as i128 * a.as_signed() as i128;
        quire.add(p < 0, p.unsigned_abs(), -2 * q as i32)?;
    }
    Ok(finish(&quire, cfg.spec))
}

/// Float EMAC: subnormal-aware decode, exact significand products placed in a
/// Kulisch accumulator whose LSB is the square of the smallest subnormal.
pub fn float_emac_traced(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<MacOutcome, EmacError> {
    let FormatSpec::Float { we, wf } = cfg.spec else {
        return Err(EmacError::WrongFormat { expected: "float".into(), found: cfg.spec.tag() });
    };
    check_inputs(weights, activations, cfg)?;
    let decode = |c: &Code| {
        float_decode(*c).map_err(|e| match e {
            CodecError::ReservedFloat(s) => EmacError::ReservedInput(s),
            other => EmacError::WrongFormat { expected: cfg.spec.tag(), found: other.to_string() },
        })
    };
    let (width, frac) = cfg.register();
    let mut quire = Quire::new(width, frac);
    let b = decode(&cfg.bias)?;
    quire.add(b.negative, b.significand as u128, b.scale(we, wf))?;
    for (w, a) in weights.iter().zip(activations) {
        let (dw, da) = (decode(w)?, decode(a)?);
        let sig = dw.significand as u128 * da.significand as u128;
        quire.add(dw.negative != da.negative, sig, dw.scale(we, wf) + da.scale(we, wf))?;
    }
    Ok(finish(&quire, cfg.spec))
}

/// Posit EMAC following the staged datapath: decode both operands, multiply the
/// fractions and renormalize on overflow, bias the combined scale factor, shift the
/// signed product into the quire, then extract sign, scale and fraction by a
/// leading-zero count and round once.
pub fn posit_emac_traced(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<MacOutcome, EmacError> {
    let FormatSpec::Posit { n, es } = cfg.spec else {
        return Err(EmacError::WrongFormat { expected: "posit".into(), found: cfg.spec.tag() });
    };
    check_inputs(weights, activations, cfg)?;
    let fbits = posit_fraction_bits(n, es) as i32;
    let bias = quire_bias(n, es);
    let (width, frac) = cfg.register();
    let mut quire = Quire::new(width, frac);

    let decode = |c: &Code| {
        let d = posit_decode(*c).expect("posit spec checked");
        match d.class {
            PositClass::NaR => Err(EmacError::NaRInput),
            _ => Ok(d),
        }
    };

    let b = decode(&cfg.bias)?;
    if b.class == PositClass::Normal {
        quire.add(b.negative, b.fraction as u128, b.scale(es) - fbits)?;
    }

    for (w, a) in weights.iter().zip(activations) {
        let (dw, da) = (decode(w)?, decode(a)?);
        if dw.class == PositClass::Zero || da.class == PositClass::Zero {
            continue;
        }
        let sign = dw.negative != da.negative;
        // product of two 1.f significands lies in [1, 4) with 2*fbits fraction bits
        let frac_mult = dw.fraction as u128 * da.fraction as u128;
        let ovf = (frac_mult >> (2 * fbits + 1)) & 1;
        // normalized significand in [1, 2) with 2*fbits+1 fraction bits
        let norm_frac = if ovf == 1 { frac_mult } else { frac_mult << 1 };
        let sf_mult = dw.scale(es) + da.scale(es) + ovf as i32;
        let sf_biased = sf_mult + bias;
        debug_assert!(sf_biased >= 0);
        // quire LSB sits at 2^-bias, so the product lands at bit sf_biased - (2*fbits+1)
        quire.add(sign, norm_frac, sf_biased - bias - (2 * fbits + 1))?;
    }
    Ok(finish(&quire, cfg.spec))
}

pub fn fixed_emac(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<Code, EmacError> {
    fixed_emac_traced(weights, activations, cfg).map(|o| o.code)
}

pub fn float_emac(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<Code, EmacError> {
    float_emac_traced(weights, activations, cfg).map(|o| o.code)
}

pub fn posit_emac(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<Code, EmacError> {
    posit_emac_traced(weights, activations, cfg).map(|o| o.code)
}

/// Dispatches on the configured format.
pub fn emac_traced(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<MacOutcome, EmacError> {
    match cfg.spec {
        FormatSpec::Posit { .. } => posit_emac_traced(weights, activations, cfg),
        FormatSpec::Float { .. } => float_emac_traced(weights, activations, cfg),
        FormatSpec::Fixed { .. } => fixed_emac_traced(weights, activations, cfg),
    }
}

pub fn emac(weights: &[Code], activations: &[Code], cfg: &MacConfig) -> Result<Code, EmacError> {
    emac_traced(weights, activations, cfg).map(|o| o.code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{code_to_exact, round_to_format};

    fn spec(tag: &str) -> FormatSpec {
        tag.parse().unwrap()
    }

    fn codes(s: FormatSpec, vals: &[f64]) -> Vec<Code> {
        vals.iter().map(|&v| round_to_format(&ExactValue::from_f64(v), s)).collect()
    }

    #[test]
    fn widths() {
        assert_eq!(kulisch_width(spec("float8e4"), 16), 40);
        assert_eq!(kulisch_width(spec("fixed8q4"), 1), 16);
        assert_eq!(kulisch_width(spec("fixed8q4"), 2), 17);
        assert_eq!(quire_width(8, 0, 16), 30);
        assert_eq!(quire_width(8, 1, 1), 50);
        assert_eq!(quire_width(3, 0, 1), 6);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(64), 6);
    }

    #[test]
    fn posit_examples() {
        let s = spec("posit8es0");
        let cfg = MacConfig::unbiased(s, 16);
        let one = codes(s, &[1.0]);
        assert_eq!(posit_emac(&one, &one, &cfg).unwrap().bits(), 0b0100_0000);
        let big = codes(s, &[64.0]);
        assert_eq!(posit_emac(&big, &big, &cfg).unwrap().bits(), 0b0111_1111);
        let w = codes(s, &[1.0, -1.0]);
        let a = codes(s, &[1.0, 1.0]);
        assert_eq!(posit_emac(&w, &a, &cfg).unwrap().bits(), 0);
    }

    #[test]
    fn posit_rejects_nar() {
        let s = spec("posit8es0");
        let cfg = MacConfig::unbiased(s, 4);
        let nar = Code::new(s, 0b1000_0000);
        let one = codes(s, &[1.0]);
        assert_eq!(posit_emac(&[nar], &one, &cfg), Err(EmacError::NaRInput));
        let cfg = MacConfig::new(s, 4, nar);
        assert_eq!(posit_emac(&[], &[], &cfg), Err(EmacError::NaRInput));
    }

    #[test]
    fn float_examples() {
        let s = spec("float8e4");
        let cfg = MacConfig::unbiased(s, 16);
        let one = codes(s, &[1.0]);
        assert_eq!(code_to_exact(float_emac(&one, &one, &cfg).unwrap()).unwrap(), ExactValue::one());
        let w = codes(s, &[2f64.powi(-6)]);
        let a = codes(s, &[2f64.powi(-3)]);
        let r = float_emac(&w, &a, &cfg).unwrap();
        assert_eq!(r.bits(), 0b0_0000_001);
        let reserved = Code::new(s, 0b0_1111_000);
        assert!(matches!(float_emac(&[reserved], &one, &cfg), Err(EmacError::ReservedInput(_))));
    }

    #[test]
    fn fixed_examples() {
        let s = spec("fixed8q4");
        let cfg = MacConfig::unbiased(s, 16);
        let w = codes(s, &[1.0, 0.5]);
        let a = codes(s, &[1.0, 1.0]);
        assert_eq!(fixed_emac(&w, &a, &cfg).unwrap().bits(), 0b0001_1000);
        let max = Code::new(s, 0b0111_1111);
        assert_eq!(fixed_emac(&[max], &[max], &cfg).unwrap().bits(), 0b0111_1111);
        let min = Code::new(s, 0b1000_0000);
        assert_eq!(fixed_emac(&[min], &[max], &cfg).unwrap().bits(), 0b1000_0000);
        // -1/16 * 1/16 floors to -1/16
        let tiny = Code::new(s, 1);
        let neg_tiny = Code::new(s, 0xff);
        assert_eq!(fixed_emac(&[tiny], &[neg_tiny], &cfg).unwrap().as_signed(), -1);
    }

    #[test]
    fn bias_identity() {
        for tag in ["posit8es1", "float7e3", "fixed6q2"] {
            let s = spec(tag);
            for bits in s.all_codes().map(|c| c.bits()) {
                let bias = Code::new(s, bits);
                if bias.is_exceptional() {
                    continue;
                }
                let cfg = MacConfig::new(s, 1, bias);
                let r = emac(&[], &[], &cfg).unwrap();
                if code_to_exact(r).unwrap().is_zero() {
                    assert!(code_to_exact(bias).unwrap().is_zero());
                } else {
                    assert_eq!(r, bias, "{tag}");
                }
            }
        }
    }

    #[test]
    fn rejects_mismatches() {
        let s = spec("posit8es0");
        let cfg = MacConfig::unbiased(s, 1);
        let one = codes(s, &[1.0, 1.0]);
        assert!(matches!(emac(&one[..1], &one, &cfg), Err(EmacError::LengthMismatch { .. })));
        assert!(matches!(emac(&one, &one, &cfg), Err(EmacError::TooManyInputs { .. })));
        let f = codes(spec("float8e4"), &[1.0]);
        assert!(matches!(emac(&f, &one[..1], &cfg), Err(EmacError::WrongFormat { .. })));
    }

    #[test]
    fn two_bit_fixed_overflows_formula_width() {
        // max/min = 1 leaves no room for the (-2)*(-2) product
        let s = spec("fixed2q0");
        let min = Code::new(s, 0b10);
        let r = emac(&[min], &[min], &MacConfig::unbiased(s, 1));
        assert!(matches!(r, Err(EmacError::AccumulatorOverflow { .. })));
    }
}
