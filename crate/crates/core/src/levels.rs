//! Quantization level sets: uniform, powers-of-two (PoT) and additive
//! powers-of-two (APoT).
//!
//! Every level is stored exactly as `sign * N / M` times the clipping
//! threshold, where `N = Σ 2^(D - e)` is the integer numerator of the level's
//! sum of power-of-two terms `2^-e` over the common denominator `2^D`, and `M`
//! is the largest numerator in the set. The scaling coefficient `γ` is
//! therefore `α · 2^D / M`, which pins the largest level to `α` exactly.
//! Floating-point values are only materialized once, from the reduced
//! rational, so the same rational always maps to the same `f64`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};

/// Largest total bit width accepted by the builders.
pub const MAX_BITS: u32 = 16;

/// Largest term exponent we allow (the smallest normal `f64` is `2^-1022`).
const MAX_EXPONENT: u32 = 1022;

/// Level-set family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    #[serde(rename = "pot")]
    PoT,
    /// Additive powers-of-two with `base_bits` bits per additive term.
    #[serde(rename = "apot")]
    APoT { base_bits: u32 },
}

impl Scheme {
    /// Parses a scheme name as used on the command line.
    pub fn parse(name: &str, base_bits: u32) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Scheme::Uniform),
            "pot" => Ok(Scheme::PoT),
            "apot" => Ok(Scheme::APoT { base_bits }),
            other => config(format!(
                "unknown scheme `{other}` (expected uniform, pot or apot)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Uniform => "uniform",
            Scheme::PoT => "pot",
            Scheme::APoT { .. } => "apot",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::APoT { base_bits } => write!(f, "apot(k={base_bits})"),
            other => f.write_str(other.name()),
        }
    }
}

/// One additive term of a level: `sign * 2^exponent`.
///
/// A non-positive `exponent` is a right shift of the multiplicand by
/// `-exponent` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftTerm {
    pub sign: i8,
    pub exponent: i32,
}

/// An immutable, sorted set of quantization levels.
#[derive(Debug, Clone)]
pub struct LevelSet {
    scheme: Scheme,
    bits: u32,
    signed: bool,
    alpha: f64,
    frac_bits: u32,
    max_numerator: BigInt,
    max_terms: usize,
    values: Vec<f64>,
    numerators: Vec<BigInt>,
    // Magnitude exponents `e` of each level's terms `2^-e`, ascending.
    exponents: Vec<Vec<u32>>,
}

impl PartialEq for LevelSet {
    fn eq(&self, other: &Self) -> bool {
        self.scheme == other.scheme
            && self.bits == other.bits
            && self.signed == other.signed
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.numerators == other.numerators
            && self.max_numerator == other.max_numerator
            && self.frac_bits == other.frac_bits
    }
}

impl LevelSet {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Total bit width, sign bit included for signed sets.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Bits available for the magnitude.
    pub fn magnitude_bits(&self) -> u32 {
        if self.signed {
            self.bits - 1
        } else {
            self.bits
        }
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scaling coefficient `γ` such that `γ · max(Σ p_i) = α`.
    pub fn gamma(&self) -> f64 {
        self.alpha * self.gamma_ratio().to_f64().unwrap_or(f64::NAN)
    }

    /// `γ / α` as an exact rational.
    pub fn gamma_ratio(&self) -> BigRational {
        BigRational::new(BigInt::from(1) << self.frac_bits, self.max_numerator.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Exponent `D` of the common denominator `2^D` of all term sums.
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Signed integer numerator of level `index` over `2^D`.
    pub fn numerator(&self, index: usize) -> &BigInt {
        &self.numerators[index]
    }

    /// Numerator of the largest level.
    pub fn max_numerator(&self) -> &BigInt {
        &self.max_numerator
    }

    /// Largest number of additive terms any level uses.
    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// Magnitude exponents `e` (terms `2^-e`) of level `index`.
    pub fn exponents(&self, index: usize) -> &[u32] {
        &self.exponents[index]
    }

    /// Sign of level `index`: -1, 0 or 1.
    pub fn level_sign(&self, index: usize) -> i8 {
        match self.numerators[index].sign() {
            num_bigint::Sign::Minus => -1,
            num_bigint::Sign::NoSign => 0,
            num_bigint::Sign::Plus => 1,
        }
    }

    /// Level `index` divided by `α`, exactly.
    pub fn ratio(&self, index: usize) -> BigRational {
        BigRational::new(self.numerators[index].clone(), self.max_numerator.clone())
    }

    /// Index of the zero level.
    pub fn zero_index(&self) -> usize {
        self.numerators
            .iter()
            .position(|n| n.is_zero())
            .expect("every level set contains zero")
    }

    /// The same set rescaled to a new clipping threshold.
    pub fn with_alpha(&self, alpha: f64) -> Result<LevelSet> {
        check_alpha(alpha)?;
        let mut out = self.clone();
        out.alpha = alpha;
        out.values = materialize(alpha, &out.numerators, &out.max_numerator);
        Ok(out)
    }

    /// Index of the level nearest to `x`. Exact midpoints go to the level
    /// with the smaller magnitude; values outside the range saturate.
    pub fn nearest_index(&self, x: f64) -> usize {
        let v = &self.values;
        let i = v.partition_point(|&l| l < x);
        if i == 0 {
            return 0;
        }
        if i == v.len() {
            return v.len() - 1;
        }
        let (lo, hi) = (v[i - 1], v[i]);
        let d_lo = x - lo;
        let d_hi = hi - x;
        if d_lo < d_hi {
            i - 1
        } else if d_hi < d_lo {
            i
        } else if lo.abs() <= hi.abs() {
            i - 1
        } else {
            i
        }
    }

    /// Value of the level nearest to `x`.
    pub fn nearest(&self, x: f64) -> f64 {
        self.values[self.nearest_index(x)]
    }

    fn from_magnitudes(
        scheme: Scheme,
        alpha: f64,
        bits: u32,
        signed: bool,
        magnitudes: Vec<Vec<u32>>,
    ) -> Result<LevelSet> {
        check_alpha(alpha)?;
        let frac_bits = magnitudes
            .iter()
            .flat_map(|t| t.iter().copied())
            .max()
            .unwrap_or(0);
        if frac_bits > MAX_EXPONENT {
            return config(format!(
                "{scheme} with {bits} bits needs exponent 2^-{frac_bits}, beyond f64 range"
            ));
        }
        let numerator_of = |terms: &[u32]| -> BigInt {
            terms
                .iter()
                .fold(BigInt::zero(), |acc, &e| acc + (BigInt::from(1) << (frac_bits - e)))
        };

        let mut entries: Vec<(BigInt, Vec<u32>)> = Vec::with_capacity(magnitudes.len() * 2);
        for mut terms in magnitudes {
            terms.sort_unstable();
            let n = numerator_of(&terms);
            if signed && !n.is_zero() {
                entries.push((-n.clone(), terms.clone()));
            }
            entries.push((n, terms));
        }
        // Sort by value, then prefer the shortest decomposition among equals.
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.len().cmp(&b.1.len())));
        entries.dedup_by(|later, earlier| later.0 == earlier.0);

        let max_numerator = entries
            .last()
            .map(|e| e.0.clone())
            .filter(|n| n.is_positive())
            .ok_or_else(|| Error::Config(format!("{scheme} with {bits} bits has no positive level")))?;
        let max_terms = entries.iter().map(|e| e.1.len()).max().unwrap_or(0);
        let (numerators, exponents): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let values = materialize(alpha, &numerators, &max_numerator);
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return config(format!(
                "{scheme} with {bits} bits has levels that collapse in f64"
            ));
        }
        Ok(LevelSet {
            scheme,
            bits,
            signed,
            alpha,
            frac_bits,
            max_numerator,
            max_terms,
            values,
            numerators,
            exponents,
        })
    }
}

fn materialize(alpha: f64, numerators: &[BigInt], max: &BigInt) -> Vec<f64> {
    numerators
        .iter()
        .map(|n| {
            // Go through |n| so that the set stays bit-for-bit symmetric.
            let mag = BigRational::new(n.abs(), max.clone())
                .to_f64()
                .expect("ratio in [0, 1] converts to f64");
            let v = alpha * mag;
            if n.is_negative() {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return config(format!("clipping threshold must be finite and > 0, got {alpha}"));
    }
    Ok(())
}

fn magnitude_bits(bits: u32, signed: bool, min_bits: u32) -> Result<u32> {
    if bits < min_bits || bits > MAX_BITS {
        return config(format!(
            "bit width {bits} out of range [{min_bits}, {MAX_BITS}] for a {} set",
            if signed { "signed" } else { "unsigned" }
        ));
    }
    Ok(if signed { bits - 1 } else { bits })
}

/// Uniform levels `α·{0, ±1/(2^(b-1)-1), ..., ±1}` (signed) or
/// `α·{0, 1/(2^b-1), ..., 1}` (unsigned).
pub fn build_uniform(alpha: f64, bits: u32, signed: bool) -> Result<LevelSet> {
    let m = magnitude_bits(bits, signed, if signed { 2 } else { 1 })?;
    // j / (2^m - 1) == (j / 2^(m-1)) / ((2^m - 1) / 2^(m-1)): bit t of j is the
    // term 2^-(m-1-t).
    let magnitudes = (0u64..(1u64 << m))
        .map(|j| (0..m).filter(|t| j >> t & 1 == 1).map(|t| m - 1 - t).collect())
        .collect();
    LevelSet::from_magnitudes(Scheme::Uniform, alpha, bits, signed, magnitudes)
}

/// Powers-of-two levels.
///
/// Signed: `α·{0, ±2^(-2^(b-1)+1), ..., ±2^-1, ±1}`. Unsigned: `α·{0} ∪
/// {α·2^-j : j = 0..2^b-2}`, i.e. `2^b` levels.
pub fn build_pot(alpha: f64, bits: u32, signed: bool) -> Result<LevelSet> {
    let _ = magnitude_bits(bits, signed, 2)?;
    let smallest = if signed {
        (1u32 << (bits - 1)) - 1
    } else {
        (1u32 << bits) - 2
    };
    if smallest > MAX_EXPONENT {
        return config(format!("pot with {bits} bits needs exponent 2^-{smallest}, beyond f64 range"));
    }
    let magnitudes = std::iter::once(Vec::new())
        .chain((0..=smallest).map(|j| vec![j]))
        .collect();
    LevelSet::from_magnitudes(Scheme::PoT, alpha, bits, signed, magnitudes)
}

/// Additive powers-of-two levels with `base_bits` bits per term.
///
/// With `m` magnitude bits: if `k | m` each level is a sum of `n = m/k` terms
/// `p_i ∈ {0, 2^-i, 2^-(i+n), ..., 2^-(i+(2^k-2)n)}`. If `k = 2` and `m` is
/// odd, `n = (m-1)/2` terms `p_i ∈ {0, 2^-i, 2^-(i+n), 2^-(i+2n+1)}` plus one
/// single-bit term `p̃ ∈ {0, 2^-2n}`.
pub fn build_apot(alpha: f64, bits: u32, base_bits: u32, signed: bool) -> Result<LevelSet> {
    let m = magnitude_bits(bits, signed, if signed { 2 } else { 1 })?;
    let scheme = Scheme::APoT { base_bits };
    let choices = apot_term_choices(m, base_bits)?;
    let magnitudes = cartesian(&choices);
    LevelSet::from_magnitudes(scheme, alpha, bits, signed, magnitudes)
}

/// Per-term exponent choices (`None` is the zero term) for `m` magnitude bits.
fn apot_term_choices(m: u32, k: u32) -> Result<Vec<Vec<Option<u32>>>> {
    if k == 0 {
        return config("base bit width k must be positive");
    }
    if m % k == 0 {
        let n = m / k;
        if k >= 31 || (1u64 << k) - 2 > u64::from(MAX_EXPONENT) {
            return config(format!("base bit width {k} too large"));
        }
        Ok((0..n)
            .map(|i| {
                std::iter::once(None)
                    .chain((0..=(1u32 << k) - 2).map(|j| Some(i + j * n)))
                    .collect()
            })
            .collect())
    } else if k == 2 {
        let n = (m - 1) / 2;
        let mut terms: Vec<Vec<Option<u32>>> = (0..n)
            .map(|i| vec![None, Some(i), Some(i + n), Some(i + 2 * n + 1)])
            .collect();
        terms.push(vec![None, Some(2 * n)]);
        Ok(terms)
    } else {
        config(format!(
            "unsupported APoT configuration: {m} magnitude bits with base bits k={k}; \
             supported are k dividing the magnitude bits, or k=2 with odd magnitude bits"
        ))
    }
}

fn cartesian(choices: &[Vec<Option<u32>>]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![Vec::new()];
    for options in choices {
        let mut next = Vec::with_capacity(out.len() * options.len());
        for prefix in &out {
            for opt in options {
                let mut terms = prefix.clone();
                if let Some(e) = opt {
                    terms.push(*e);
                }
                next.push(terms);
            }
        }
        out = next;
    }
    out
}

/// Builds a level set of any scheme.
pub fn build_levels(scheme: Scheme, alpha: f64, bits: u32, signed: bool) -> Result<LevelSet> {
    match scheme {
        Scheme::Uniform => build_uniform(alpha, bits, signed),
        Scheme::PoT => build_pot(alpha, bits, signed),
        Scheme::APoT { base_bits } => build_apot(alpha, bits, base_bits, signed),
    }
}

/// Projects `x` onto the nearest level. The caller clips first; values outside
/// the level range map to the boundary level.
pub fn project(x: f64, ls: &LevelSet) -> Result<(f64, usize)> {
    if !x.is_finite() {
        return input(format!("cannot project non-finite value {x}"));
    }
    let i = ls.nearest_index(x);
    Ok((ls.values[i], i))
}

/// Shift descriptors of level `index`: the level equals `γ · Σ sign·2^exponent`.
/// Zero has no terms. Terms are ordered from the largest to the smallest.
pub fn pot_term_exponents(index: usize, ls: &LevelSet) -> Result<Vec<ShiftTerm>> {
    if index >= ls.len() {
        return input(format!("level index {index} out of range for {} levels", ls.len()));
    }
    let sign = ls.level_sign(index);
    Ok(ls.exponents[index]
        .iter()
        .map(|&e| ShiftTerm { sign, exponent: -(e as i32) })
        .collect())
}

/// A tensor stored as level indices into a shared level set.
#[derive(Debug, Clone)]
pub struct QuantizedTensor {
    indices: Vec<u32>,
    level_set: Arc<LevelSet>,
    shape: Vec<usize>,
}

impl QuantizedTensor {
    pub fn new(indices: Vec<u32>, shape: Vec<usize>, level_set: Arc<LevelSet>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != indices.len() {
            return input(format!(
                "shape {shape:?} holds {count} elements but {} indices were given",
                indices.len()
            ));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= level_set.len()) {
            return input(format!("level index {bad} out of range for {} levels", level_set.len()));
        }
        Ok(QuantizedTensor { indices, level_set, shape })
    }

    /// Projects every value onto `level_set` (no clipping beyond saturation).
    pub fn from_values(values: &[f64], shape: Vec<usize>, level_set: Arc<LevelSet>) -> Result<Self> {
        let indices = values
            .iter()
            .map(|&x| project(x, &level_set).map(|(_, i)| i as u32))
            .collect::<Result<Vec<_>>>()?;
        QuantizedTensor::new(indices, shape, level_set)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn level_set(&self) -> &Arc<LevelSet> {
        &self.level_set
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.level_set.value(i as usize)).collect()
    }
}
