use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CodecError;

/// One numeric format: a posit, a minifloat or a two's-complement fixed-point type.
///
/// The textual tag is `posit{n}es{es}`, `float{n}e{we}` or `fixed{n}q{q}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormatSpec {
    Posit { n: u32, es: u32 },
    /// `n = 1 + we + wf`
    Float { we: u32, wf: u32 },
    Fixed { n: u32, q: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Posit,
    Float,
    Fixed,
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatKind::Posit => "posit",
            FormatKind::Float => "float",
            FormatKind::Fixed => "fixed",
        })
    }
}

impl FormatSpec {
    pub fn posit(n: u32, es: u32) -> Result<Self, CodecError> {
        FormatSpec::Posit { n, es }.validated()
    }

    /// A float with total width `n` and `we` exponent bits.
    pub fn float(n: u32, we: u32) -> Result<Self, CodecError> {
        if n < we + 2 {
            return Err(CodecError::InvalidSpec(format!("float{n}e{we}: no room for a fraction bit")));
        }
        FormatSpec::Float { we, wf: n - 1 - we }.validated()
    }

    pub fn fixed(n: u32, q: u32) -> Result<Self, CodecError> {
        FormatSpec::Fixed { n, q }.validated()
    }

    pub fn validated(self) -> Result<Self, CodecError> {
        let ok = match self {
            FormatSpec::Posit { n, es } => (3..=16).contains(&n) && es <= 4 && es + 3 <= n,
            FormatSpec::Float { we, wf } => (2..=8).contains(&we) && wf >= 1 && 1 + we + wf <= 32,
            FormatSpec::Fixed { n, q } => (2..=32).contains(&n) && q < n,
        };
        if ok {
            Ok(self)
        } else {
            Err(CodecError::InvalidSpec(self.tag()))
        }
    }

    pub fn kind(&self) -> FormatKind {
        match self {
            FormatSpec::Posit { .. } => FormatKind::Posit,
            FormatSpec::Float { .. } => FormatKind::Float,
            FormatSpec::Fixed { .. } => FormatKind::Fixed,
        }
    }

    /// Total bit width.
    pub fn n(&self) -> u32 {
        match *self {
            FormatSpec::Posit { n, .. } | FormatSpec::Fixed { n, .. } => n,
            FormatSpec::Float { we, wf } => 1 + we + wf,
        }
    }

    /// The format's secondary parameter: `es`, `we` or `q`.
    pub fn param(&self) -> u32 {
        match *self {
            FormatSpec::Posit { es, .. } => es,
            FormatSpec::Float { we, .. } => we,
            FormatSpec::Fixed { q, .. } => q,
        }
    }

    pub fn tag(&self) -> String {
        match *self {
            FormatSpec::Posit { n, es } => format!("posit{n}es{es}"),
            FormatSpec::Float { we, .. } => format!("float{}e{we}", self.n()),
            FormatSpec::Fixed { n, q } => format!("fixed{n}q{q}"),
        }
    }

    pub(crate) fn mask(&self) -> u64 {
        (1u64 << self.n()) - 1
    }

    /// All `2^n` codes of the format, in bit-pattern order.
    pub fn all_codes(&self) -> impl Iterator<Item = Code> + '_ {
        let spec = *self;
        (0..=self.mask()).map(move |bits| Code::new(spec, bits))
    }

    pub fn zero(&self) -> Code {
        Code::new(*self, 0)
    }
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for FormatSpec {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || CodecError::UnknownFormatTag(s.to_string());
        let split = |rest: &str, sep: &str| -> Option<(u32, u32)> {
            let (a, b) = rest.split_once(sep)?;
            Some((a.parse().ok()?, b.parse().ok()?))
        };
        let spec = if let Some(rest) = s.strip_prefix("posit") {
            let (n, es) = split(rest, "es").ok_or_else(unknown)?;
            FormatSpec::Posit { n, es }
        } else if let Some(rest) = s.strip_prefix("float") {
            let (n, we) = split(rest, "e").ok_or_else(unknown)?;
            return FormatSpec::float(n, we);
        } else if let Some(rest) = s.strip_prefix("fixed") {
            let (n, q) = split(rest, "q").ok_or_else(unknown)?;
            FormatSpec::Fixed { n, q }
        } else {
            return Err(unknown());
        };
        spec.validated()
    }
}

impl Serialize for FormatSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for FormatSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An n-bit pattern interpreted in a given format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Code {
    bits: u64,
    spec: FormatSpec,
}

impl Code {
    /// Panics if `bits` does not fit in `spec.n()` bits.
    pub fn new(spec: FormatSpec, bits: u64) -> Self {
        assert!(bits <= spec.mask(), "{bits:#x} does not fit in {}", spec.tag());
        Code { bits, spec }
    }

    pub fn try_new(spec: FormatSpec, bits: u64) -> Result<Self, CodecError> {
        if bits <= spec.mask() {
            Ok(Code { bits, spec })
        } else {
            Err(CodecError::BitsOutOfRange { bits, spec: spec.tag() })
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn spec(&self) -> FormatSpec {
        self.spec
    }

    /// The pattern read as an n-bit two's-complement integer.
    pub fn as_signed(&self) -> i64 {
        let n = self.spec.n();
        ((self.bits << (64 - n)) as i64) >> (64 - n)
    }

    pub fn sign_bit(&self) -> bool {
        (self.bits >> (self.spec.n() - 1)) & 1 == 1
    }

    pub fn is_nar(&self) -> bool {
        matches!(self.spec, FormatSpec::Posit { .. }) && self.bits == 1u64 << (self.spec.n() - 1)
    }

    /// Posit NaR or a float with an all-ones exponent field.
    pub fn is_exceptional(&self) -> bool {
        match self.spec {
            FormatSpec::Posit { .. } => self.is_nar(),
            FormatSpec::Float { we, wf } => (self.bits >> wf) & ((1 << we) - 1) == (1 << we) - 1,
            FormatSpec::Fixed { .. } => false,
        }
    }

    /// True when the value is strictly below zero.
    pub fn is_negative(&self) -> bool {
        match self.spec {
            FormatSpec::Posit { .. } => self.sign_bit() && !self.is_nar(),
            FormatSpec::Float { .. } => self.sign_bit() && self.bits & (self.spec.mask() >> 1) != 0,
            FormatSpec::Fixed { .. } => self.sign_bit(),
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.bits, width = self.spec.n() as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_roundtrip() {
        for tag in ["posit8es0", "posit5es2", "float8e4", "float5e3", "fixed8q4", "fixed32q31"] {
            let spec: FormatSpec = tag.parse().unwrap();
            assert_eq!(spec.tag(), tag);
        }
        assert_eq!("float8e4".parse::<FormatSpec>().unwrap(), FormatSpec::Float { we: 4, wf: 3 });
    }

    #[test]
    fn rejects_bad_tags() {
        for tag in ["posit2es0", "posit8es6", "posit5es3", "float4e3", "float8e1", "fixed8q8", "fixed1q0", "int8", "posit8", ""] {
            assert!(tag.parse::<FormatSpec>().is_err(), "{tag}");
        }
        assert!(matches!("int8".parse::<FormatSpec>(), Err(CodecError::UnknownFormatTag(_))));
    }

    #[test]
    fn signed_view() {
        let spec = FormatSpec::fixed(8, 4).unwrap();
        assert_eq!(Code::new(spec, 0xff).as_signed(), -1);
        assert_eq!(Code::new(spec, 0x80).as_signed(), -128);
        assert_eq!(Code::new(spec, 0x7f).as_signed(), 127);
        assert!(Code::try_new(spec, 0x100).is_err());
    }

    #[test]
    fn nar_and_reserved() {
        let p = FormatSpec::posit(8, 0).unwrap();
        assert!(Code::new(p, 0x80).is_nar());
        assert!(!Code::new(p, 0x80).is_negative());
        let f = FormatSpec::float(8, 4).unwrap();
        assert!(Code::new(f, 0b0_1111_000).is_exceptional());
        assert!(!Code::new(f, 0b0_1110_111).is_exceptional());
        assert!(!Code::new(f, 0b1_0000_000).is_negative());
    }
}
