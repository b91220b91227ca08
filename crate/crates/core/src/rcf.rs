//! Reparameterized clipping function (RCF).
//!
//! Forward: `ŵ = α · Π(clip(w/α, ±1))` against a level set built at `α = 1`.
//! Backward, with the straight-through estimator on the projection:
//!
//! ```text
//! ∂ŵ/∂α = sign(w)            if |w| >  α
//!       = Π(w/α) - w/α       if |w| <= α
//! ```
//!
//! For comparison [`pact_grad_alpha`] gives the PACT estimate, which is zero
//! for every weight inside the clipping range.

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};
use crate::levels::LevelSet;

/// How the straight-through estimator treats clipped elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteMode {
    /// `∂ŵ/∂w̃ = 1` everywhere.
    Full,
    /// `∂ŵ/∂w̃ = 1` inside the clipping range and 0 outside.
    #[default]
    Clipped,
}

impl std::str::FromStr for SteMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SteMode::Full),
            "clipped" => Ok(SteMode::Clipped),
            other => config(format!("unknown STE mode `{other}` (expected full or clipped)")),
        }
    }
}

/// Per-element RCF derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RcfGradient {
    /// `∂ŵ/∂α`.
    pub d_alpha: Vec<f64>,
    /// `∂ŵ/∂w` under the straight-through estimator.
    pub d_w: Vec<f64>,
    /// Elements strictly outside the clipping range.
    pub clipped_mask: Vec<bool>,
}

impl RcfGradient {
    /// Chain rule for the shared threshold: `Σ upstream_i · ∂ŵ_i/∂α`,
    /// accumulated in index order.
    pub fn alpha_vjp(&self, upstream: &[f64]) -> f64 {
        self.d_alpha.iter().zip(upstream).map(|(d, g)| d * g).sum()
    }
}

pub(crate) fn check_unit(unit_levels: &LevelSet) -> Result<()> {
    if unit_levels.alpha() != 1.0 {
        return config(format!(
            "RCF projects against a unit level set, got alpha = {}",
            unit_levels.alpha()
        ));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return config(format!("clipping threshold must be finite and > 0, got {alpha}"));
    }
    Ok(())
}

fn check_inputs(w: &[f64], unit_levels: &LevelSet) -> Result<()> {
    if let Some(x) = w.iter().find(|x| !x.is_finite()) {
        return input(format!("non-finite value {x}"));
    }
    if !unit_levels.is_signed() {
        if let Some(x) = w.iter().find(|&&x| x < 0.0) {
            return input(format!("negative value {x} for an unsigned level set"));
        }
    }
    Ok(())
}

/// Clips `v` to the unit range of the level set: `[-1, 1]` or `[0, 1]`.
#[inline]
pub(crate) fn clip_unit(v: f64, signed: bool) -> f64 {
    let lo = if signed { -1.0 } else { 0.0 };
    v.clamp(lo, 1.0)
}

/// `α · Π(clip(w/α, ±1))` element-wise.
pub fn rcf_forward(w: &[f64], alpha: f64, unit_levels: &LevelSet) -> Result<Vec<f64>> {
    Ok(rcf_pass(w, alpha, unit_levels, SteMode::Clipped, false)?.output)
}

/// Result of one fused forward/backward RCF pass.
#[derive(Debug, Clone)]
pub(crate) struct RcfPass {
    pub output: Vec<f64>,
    pub grad: RcfGradient,
    pub indices: Vec<u32>,
}

/// Forward and gradients in one sweep so both see the same projection.
///
/// With `relaxed` the projection is replaced by the identity (clipping is
/// kept); the interior threshold gradient is then exactly zero.
pub(crate) fn rcf_pass(
    w: &[f64],
    alpha: f64,
    unit_levels: &LevelSet,
    ste: SteMode,
    relaxed: bool,
) -> Result<RcfPass> {
    check_alpha(alpha)?;
    check_unit(unit_levels)?;
    check_inputs(w, unit_levels)?;
    let signed = unit_levels.is_signed();
    let n = w.len();
    let mut pass = RcfPass {
        output: Vec::with_capacity(n),
        grad: RcfGradient {
            d_alpha: Vec::with_capacity(n),
            d_w: Vec::with_capacity(n),
            clipped_mask: Vec::with_capacity(n),
        },
        indices: Vec::with_capacity(n),
    };
    for &x in w {
        let v = x / alpha;
        let clipped = x.abs() > alpha;
        let c = clip_unit(v, signed);
        let idx = unit_levels.nearest_index(c);
        let level = if relaxed { c } else { unit_levels.value(idx) };
        pass.output.push(alpha * level);
        pass.indices.push(idx as u32);
        pass.grad.d_alpha.push(if clipped { x.signum() } else { level - v });
        pass.grad.d_w.push(match (ste, clipped) {
            (SteMode::Clipped, true) => 0.0,
            _ => 1.0,
        });
        pass.grad.clipped_mask.push(clipped);
    }
    Ok(pass)
}

/// RCF threshold gradient with the default (clipped) STE for weights.
pub fn rcf_grad_alpha(w: &[f64], alpha: f64, unit_levels: &LevelSet) -> Result<RcfGradient> {
    rcf_grad(w, alpha, unit_levels, SteMode::Clipped)
}

/// RCF threshold and weight gradients.
///
/// `|w| = α` belongs to the interior branch.
pub fn rcf_grad(w: &[f64], alpha: f64, unit_levels: &LevelSet, ste: SteMode) -> Result<RcfGradient> {
    Ok(rcf_pass(w, alpha, unit_levels, ste, false)?.grad)
}

/// PACT threshold gradient: `sign(w)` outside the range, 0 inside.
pub fn pact_grad_alpha(w: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if let Some(x) = w.iter().find(|x| !x.is_finite()) {
        return input(format!("non-finite value {x}"));
    }
    Ok(w
        .iter()
        .map(|&x| if x.abs() > alpha { x.signum() } else { 0.0 })
        .collect())
}
