//! Independent rational reference for code values, dot products and rounding.
//!
//! Nothing here calls into the codec's decode or rounding paths: code values are
//! recomputed from the raw bit string, and rounding is a direct search for the two
//! representable neighbours of the exact value.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::codec::{Code, FormatSpec};
use crate::exact::ExactValue;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("NaR input")]
    NaRInput,
    #[error("reserved float pattern {0}")]
    ReservedInput(String),
    #[error("length mismatch: {weights} weights vs {activations} activations")]
    LengthMismatch { weights: usize, activations: usize },
}

/// Value of a code computed straight from its bit string.
pub fn reference_value(code: Code) -> Result<ExactValue, OracleError> {
    let bits = code.bits();
    match code.spec() {
        FormatSpec::Fixed { n, q } => {
            let signed = if bits >> (n - 1) == 1 { bits as i128 - (1i128 << n) } else { bits as i128 };
            Ok(ExactValue::from_dyadic(BigInt::from(signed), -(q as i32)))
        }
        FormatSpec::Float { we, wf } => {
            let sign = bits >> (we + wf) == 1;
            let e = (bits >> wf) & ((1 << we) - 1);
            let f = bits & ((1 << wf) - 1);
            if e == (1 << we) - 1 {
                return Err(OracleError::ReservedInput(code.to_string()));
            }
            let bias = (1i64 << (we - 1)) - 1;
            // subnormal: 0.f * 2^(1-bias); normal: 1.f * 2^(e-bias)
            let (m, p) = if e == 0 { (f, 1 - bias) } else { (f + (1 << wf), e as i64 - bias) };
            let v = ExactValue::from_dyadic(m, (p - wf as i64) as i32);
            Ok(if sign { -v } else { v })
        }
        FormatSpec::Posit { n, es } => {
            if bits == 0 {
                return Ok(ExactValue::zero());
            }
            if bits == 1 << (n - 1) {
                return Err(OracleError::NaRInput);
            }
            let sign = bits >> (n - 1) == 1;
            let mag = if sign { (1u64 << n) - bits } else { bits };
            // walk the n-1 body bits from the top
            let body: Vec<u64> = (0..n - 1).rev().map(|i| (mag >> i) & 1).collect();
            let first = body[0];
            let run = body.iter().take_while(|&&b| b == first).count();
            let k = if first == 1 { run as i64 - 1 } else { -(run as i64) };
            let rest = body.get(run + 1..).unwrap_or(&[]);
            let exp_bits = &rest[..rest.len().min(es as usize)];
            let mut e = 0i64;
            for &b in exp_bits {
                e = e * 2 + b as i64;
            }
            e <<= es as usize - exp_bits.len();
            let frac_bits = &rest[exp_bits.len()..];
            let mut f = BigInt::one();
            for &b in frac_bits {
                f = f * 2 + b;
            }
            let scale = k * (1i64 << es) + e - frac_bits.len() as i64;
            let v = ExactValue::from_dyadic(f, scale as i32);
            Ok(if sign { -v } else { v })
        }
    }
}

/// `sum(w_i * a_i) + bias`, exactly.
pub fn oracle_dot(weights: &[Code], activations: &[Code], bias: Code) -> Result<ExactValue, OracleError> {
    if weights.len() != activations.len() {
        return Err(OracleError::LengthMismatch { weights: weights.len(), activations: activations.len() });
    }
    let mut acc = reference_value(bias)?;
    for (w, a) in weights.iter().zip(activations) {
        acc += &(reference_value(*w)? * reference_value(*a)?);
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub exact_sum: ExactValue,
    pub rounded: Code,
    /// Largest code value not above `exact_sum`; the format minimum when none is.
    pub neighbor_below: Code,
    /// Smallest code value not below `exact_sum`; the format maximum when none is.
    pub neighbor_above: Code,
}

impl OracleResult {
    /// True when `exact_sum` lies outside the representable range.
    pub fn saturated(&self) -> bool {
        self.neighbor_below == self.neighbor_above
            && reference_value(self.rounded).map(|r| r != self.exact_sum).unwrap_or(true)
    }
}

type Table = Arc<Vec<(ExactValue, Code)>>;

/// All finite codes sorted by value; float negative zero is left out.
fn value_table(spec: FormatSpec) -> Table {
    static CACHE: OnceLock<Mutex<HashMap<FormatSpec, Table>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&spec) {
        return t.clone();
    }
    let mut entries: Vec<(ExactValue, Code)> = (0..=max_bits(spec))
        .map(|b| Code::new(spec, b))
        .filter_map(|c| reference_value(c).ok().map(|v| (v, c)))
        .filter(|(v, c)| !(v.is_zero() && c.bits() != 0))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let table = Arc::new(entries);
    cache.lock().unwrap().insert(spec, table.clone());
    table
}

fn max_bits(spec: FormatSpec) -> u64 {
    (1u64 << spec.n()) - 1
}

type Bracket = (Option<(ExactValue, Code)>, Option<(ExactValue, Code)>);

fn bracket_by_table(v: &ExactValue, spec: FormatSpec) -> Bracket {
    let table = value_table(spec);
    let idx = table.partition_point(|(x, _)| x <= v);
    let below = idx.checked_sub(1).map(|i| table[i].clone());
    let above = match &below {
        Some((x, c)) if x == v => Some((x.clone(), *c)),
        _ => table.get(idx).cloned(),
    };
    (below, above)
}

/// Positive patterns of posits and floats are ordered by value, so binary search over
/// the scale of each pattern brackets `|v|`; negative values mirror the result.
fn bracket_by_search(v: &ExactValue, spec: FormatSpec) -> Bracket {
    let n = spec.n();
    let top = match spec {
        FormatSpec::Posit { .. } => (1u64 << (n - 1)) - 1,
        FormatSpec::Float { we, wf } => (((1u64 << we) - 2) << wf) | ((1 << wf) - 1),
        FormatSpec::Fixed { .. } => unreachable!("fixed point is bracketed directly"),
    };
    let value_of = |b: u64| reference_value(Code::new(spec, b)).expect("finite pattern");
    let negate = |b: u64| match spec {
        FormatSpec::Posit { .. } => b.wrapping_neg() & max_bits(spec),
        _ => b | (1 << (n - 1)),
    };
    let target = v.abs();
    // largest pattern in [0, top] whose value is <= target
    let (mut lo, mut hi) = (0u64, top);
    if value_of(top) <= target {
        lo = top;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if value_of(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let lo_val = value_of(lo);
    let pos_below = Some((lo_val.clone(), Code::new(spec, lo)));
    let pos_above = if lo_val == target {
        pos_below.clone()
    } else if lo == top {
        None
    } else {
        Some((value_of(lo + 1), Code::new(spec, lo + 1)))
    };
    if !v.is_negative() {
        return (pos_below, pos_above);
    }
    let mirror = |e: Option<(ExactValue, Code)>| {
        e.map(|(x, c)| if c.bits() == 0 { (x, c) } else { (-x, Code::new(spec, negate(c.bits()))) })
    };
    (mirror(pos_above), mirror(pos_below))
}

/// Nearest code to `v`, ties to the even pattern, computed by neighbour search.
pub fn oracle_round(v: &ExactValue, spec: FormatSpec) -> OracleResult {
    if let FormatSpec::Fixed { n, q } = spec {
        return fixed_round(v, n, q, spec);
    }
    let (below, above) = if spec.n() <= 10 { bracket_by_table(v, spec) } else { bracket_by_search(v, spec) };
    resolve(v, spec, below, above)
}

fn resolve(
    v: &ExactValue,
    spec: FormatSpec,
    below: Option<(ExactValue, Code)>,
    above: Option<(ExactValue, Code)>,
) -> OracleResult {
    let result = |rounded: Code, b: Code, a: Code| OracleResult {
        exact_sum: v.clone(),
        rounded,
        neighbor_below: b,
        neighbor_above: a,
    };
    match (below, above) {
        (Some((_, b)), None) => result(b, b, b),
        (None, Some((_, a))) => result(a, a, a),
        (None, None) => unreachable!("every format has at least one finite code"),
        (Some((bv, b)), Some((av, a))) => {
            if b == a {
                return result(b, b, a);
            }
            let is_posit = matches!(spec, FormatSpec::Posit { .. });
            if is_posit && bv.is_zero() {
                return result(a, b, a);
            }
            if is_posit && av.is_zero() {
                return result(b, b, a);
            }
            let d_below = v.clone() - bv;
            let d_above = av - v.clone();
            let rounded = match d_below.cmp(&d_above) {
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Equal => {
                    if b.bits() & 1 == 0 {
                        b
                    } else {
                        a
                    }
                }
            };
            result(rounded, b, a)
        }
    }
}

fn fixed_round(v: &ExactValue, n: u32, q: u32, spec: FormatSpec) -> OracleResult {
    let scaled = v.as_rational() * num_rational::BigRational::from_integer(BigInt::one() << q as usize);
    let lo: BigInt = -(BigInt::one() << (n - 1));
    let hi: BigInt = (BigInt::one() << (n - 1)) - 1;
    let clip = |x: BigInt| x.max(lo.clone()).min(hi.clone());
    let floor = clip(scaled.floor().to_integer());
    let ceil = clip(scaled.ceil().to_integer());
    let to_code = |x: &BigInt| {
        let m = (BigInt::one() << n) - 1;
        let bits: BigInt = x & &m;
        Code::new(spec, if bits.is_zero() { 0 } else { bits.to_u64_digits().1[0] })
    };
    let below = to_code(&floor);
    OracleResult { exact_sum: v.clone(), rounded: below, neighbor_below: below, neighbor_above: to_code(&ceil) }
}
