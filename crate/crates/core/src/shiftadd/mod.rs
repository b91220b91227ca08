//! Bit-exact shift-add multiply-accumulate.
//!
//! A weight level is `γ · Σ ±2^-e`. Multiplying an integer activation code by
//! one term is a shift, and the `γ` and threshold factors are applied once
//! after the accumulation. In exact mode every term is tracked in units of
//! `2^-D` (`D` = the smallest exponent of the level set), so each term becomes
//! a left shift `raw << (D - e)` and nothing is truncated. The accumulated
//! integer then equals `Σ N_w · raw` where `N_w` is the level numerator.
//!
//! Truncating mode applies real right shifts (`raw >> e`) the way narrow
//! hardware would, and [`MacAccumulator::truncation_error`] reports the loss.

pub mod cost;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::levels::LevelSet;

/// Largest activation code width accepted by the simulator.
pub const MAX_ACT_BITS: u32 = 62;

/// A non-negative integer activation code. Its real value is
/// `raw · alpha / max_code`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointActivation {
    pub raw: u64,
    pub bits: u32,
    pub alpha: f64,
    pub max_code: u64,
}

impl FixedPointActivation {
    /// Uniform `bits`-bit code: `max_code = 2^bits - 1`.
    pub fn uniform(raw: u64, bits: u32, alpha: f64) -> Result<Self> {
        if bits == 0 || bits > MAX_ACT_BITS {
            return Err(Error::Config(format!(
                "activation code width {bits} out of range [1, {MAX_ACT_BITS}]"
            )));
        }
        let max_code = (1u64 << bits) - 1;
        if raw > max_code {
            return input(format!("activation code {raw} does not fit in {bits} bits"));
        }
        Ok(FixedPointActivation { raw, bits, alpha, max_code })
    }

    /// Code of level `index` of an unsigned level set: the level numerator over
    /// the set's largest numerator.
    pub fn from_level(index: usize, ls: &LevelSet) -> Result<Self> {
        if ls.is_signed() {
            return input("activation level sets are unsigned");
        }
        if index >= ls.len() {
            return input(format!("level index {index} out of range for {} levels", ls.len()));
        }
        let max = ls.max_numerator();
        let bits = max.bits() as u32;
        if bits > MAX_ACT_BITS {
            return Err(Error::Arithmetic(format!(
                "activation numerators need {bits} bits, more than {MAX_ACT_BITS}"
            )));
        }
        let to_u64 = |n: &BigInt| n.to_u64().expect("unsigned numerator fits");
        Ok(FixedPointActivation {
            raw: to_u64(ls.numerator(index)),
            bits,
            alpha: ls.alpha(),
            max_code: to_u64(max),
        })
    }

    pub fn value(&self) -> f64 {
        self.raw as f64 * self.alpha / self.max_code as f64
    }
}

/// An exact dyadic rational `num / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dyadic {
    pub num: i128,
    pub frac_bits: u32,
}

impl Dyadic {
    /// Strips common factors of two.
    pub fn reduce(self) -> Dyadic {
        if self.num == 0 {
            return Dyadic { num: 0, frac_bits: 0 };
        }
        let tz = self.num.trailing_zeros().min(self.frac_bits);
        Dyadic { num: self.num >> tz, frac_bits: self.frac_bits - tz }
    }

    /// The value as an integer if it is one.
    pub fn to_integer(self) -> Option<i128> {
        let r = self.reduce();
        (r.frac_bits == 0).then_some(r.num)
    }

    /// Numerator over `2^target` (`target >= frac_bits`).
    pub fn numerator_at(self, target: u32) -> Result<i128> {
        if target < self.frac_bits {
            return input(format!("cannot express 2^-{} in units of 2^-{target}", self.frac_bits));
        }
        shl_checked(self.num, target - self.frac_bits)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.frac_bits as i32)
    }
}

fn shl_checked(v: i128, s: u32) -> Result<i128> {
    if v == 0 {
        return Ok(0);
    }
    if s >= 127 || v.unsigned_abs().leading_zeros() <= s + 1 {
        return Err(Error::Arithmetic(format!("{v} << {s} overflows the 128-bit accumulator")));
    }
    Ok(v << s)
}

/// `raw · 2^exponent` with exact exponent bookkeeping: a left shift for
/// `exponent >= 0`, otherwise the raw value over `2^-exponent`.
pub fn shift_mul(exponent: i32, raw: i128) -> Result<Dyadic> {
    if exponent >= 0 {
        Ok(Dyadic { num: shl_checked(raw, exponent as u32)?, frac_bits: 0 })
    } else {
        Ok(Dyadic { num: raw, frac_bits: exponent.unsigned_abs() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MacMode {
    Exact,
    Truncating,
}

/// Accumulator for one dot product against one weight level set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacAccumulator {
    mode: MacMode,
    frac_bits: u32,
    acc: i128,
    // Exact reference kept alongside the truncating accumulator.
    exact: i128,
    macs: u64,
    slots: u64,
    active: u64,
}

impl MacAccumulator {
    /// Exact accumulator in units of `2^-D` for level set `ls`.
    pub fn new(ls: &LevelSet) -> Self {
        Self::with_mode(ls, MacMode::Exact)
    }

    pub fn truncating(ls: &LevelSet) -> Self {
        Self::with_mode(ls, MacMode::Truncating)
    }

    pub fn with_mode(ls: &LevelSet, mode: MacMode) -> Self {
        MacAccumulator {
            mode,
            frac_bits: ls.frac_bits(),
            acc: 0,
            exact: 0,
            macs: 0,
            slots: 0,
            active: 0,
        }
    }

    pub fn mode(&self) -> MacMode {
        self.mode
    }

    /// Accumulated value in activation-code units, before the `γ` and
    /// threshold rescale.
    pub fn value(&self) -> Dyadic {
        match self.mode {
            MacMode::Exact => Dyadic { num: self.acc, frac_bits: self.frac_bits },
            MacMode::Truncating => Dyadic { num: self.acc, frac_bits: 0 },
        }
    }

    /// Raw accumulator; in exact mode this is `Σ N_w · raw`.
    pub fn raw(&self) -> i128 {
        self.acc
    }

    /// Number of multiply-accumulates performed.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Shift-add slots issued: the level set's term count per MAC.
    pub fn shift_add_slots(&self) -> u64 {
        self.slots
    }

    /// Shift-adds that carried a nonzero term.
    pub fn active_shift_adds(&self) -> u64 {
        self.active
    }

    /// `exact - truncated`, in activation-code units (zero in exact mode).
    pub fn truncation_error(&self) -> f64 {
        match self.mode {
            MacMode::Exact => 0.0,
            MacMode::Truncating => {
                Dyadic { num: self.exact, frac_bits: self.frac_bits }.to_f64() - self.acc as f64
            }
        }
    }

    /// Real value of the dot product: `acc · α_W · α_X / (M_W · max_code)`.
    pub fn rescale(&self, ls: &LevelSet, act_alpha: f64, act_max_code: u64) -> f64 {
        let units = match self.mode {
            MacMode::Exact => self.acc as f64,
            MacMode::Truncating => self.acc as f64 * 2f64.powi(self.frac_bits as i32),
        };
        let m = ls.max_numerator().to_f64().unwrap_or(f64::NAN);
        units * ls.alpha() * act_alpha / (m * act_max_code as f64)
    }
}

/// Adds `level[weight_index] · act.raw` to `acc` with one shift-add per
/// nonzero term of the level.
pub fn apot_mac(
    weight_index: usize,
    ls: &LevelSet,
    act: &FixedPointActivation,
    acc: &mut MacAccumulator,
) -> Result<()> {
    if weight_index >= ls.len() {
        return input(format!("level index {weight_index} out of range for {} levels", ls.len()));
    }
    if acc.frac_bits != ls.frac_bits() {
        return Err(Error::Usage("accumulator was built for a different level set".into()));
    }
    let sign = ls.level_sign(weight_index) as i128;
    let raw = act.raw as i128;
    let d = acc.frac_bits;
    for &e in ls.exponents(weight_index) {
        let exact = shl_checked(raw, d - e)?;
        let term = match acc.mode {
            MacMode::Exact => exact,
            MacMode::Truncating => {
                acc.exact = checked_add(acc.exact, sign * exact)?;
                if e >= 127 {
                    0
                } else {
                    raw >> e
                }
            }
        };
        acc.acc = checked_add(acc.acc, sign * term)?;
        acc.active += 1;
    }
    acc.macs += 1;
    acc.slots += ls.max_terms() as u64;
    Ok(())
}

fn checked_add(a: i128, b: i128) -> Result<i128> {
    a.checked_add(b)
        .ok_or_else(|| Error::Arithmetic(format!("{a} + {b} overflows the 128-bit accumulator")))
}

/// Wide-integer reference: `N_w · raw`.
pub fn direct_product(weight_index: usize, ls: &LevelSet, raw: u64) -> BigInt {
    ls.numerator(weight_index) * BigInt::from(raw)
}

/// Exact dot product of weight level indices against activation codes.
pub fn dot(
    weight_indices: &[u32],
    ls: &LevelSet,
    acts: &[FixedPointActivation],
    acc: &mut MacAccumulator,
) -> Result<()> {
    if weight_indices.len() != acts.len() {
        return input(format!(
            "dot product of {} weights with {} activations",
            weight_indices.len(),
            acts.len()
        ));
    }
    for (&w, a) in weight_indices.iter().zip(acts) {
        apot_mac(w as usize, ls, a, acc)?;
    }
    Ok(())
}

/// `true` when the exact accumulator matches the wide-integer sum.
pub fn matches_oracle(acc: &MacAccumulator, oracle: &BigInt) -> bool {
    acc.mode == MacMode::Exact && BigInt::from(acc.acc) == *oracle
}
