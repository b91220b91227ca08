//! Weight and activation fake-quantization for one layer.
//!
//! Weights: normalize, then `ŵ = α_W · Π_{Q(1, b_w)}(clip(w̃/α_W, ±1))` on a
//! signed set. Activations skip normalization and use an unsigned set:
//! `x̂ = α_X · Π_{Q(1, b_a)}(clip(x/α_X, 0..1))`.
//!
//! The caches returned by the forward functions hold everything the backward
//! pass needs (per-element threshold derivatives, STE masks, normalization
//! statistics); they are opaque to callers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::levels::{build_levels, build_uniform, LevelSet, QuantizedTensor, Scheme};
use crate::rcf::{rcf_pass, SteMode};
use crate::shiftadd::cost::FULL_PRECISION_BITS;
use crate::wnorm::{self, NormStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub scheme: Scheme,
    pub alpha_w: f64,
    pub alpha_x: f64,
    pub ste_mode: SteMode,
    pub eps: f64,
    /// Normalize weights before quantizing them.
    pub weight_norm: bool,
    /// Replace the projection by the identity while keeping clipping. The
    /// backward pass is then the exact derivative of the forward, which is
    /// what finite-difference checks need.
    pub relaxed: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            weight_bits: 4,
            activation_bits: 4,
            scheme: Scheme::APoT { base_bits: 2 },
            alpha_w: 3.0,
            alpha_x: 8.0,
            ste_mode: SteMode::Clipped,
            eps: wnorm::DEFAULT_EPS,
            weight_norm: true,
            relaxed: false,
        }
    }
}

impl QuantConfig {
    pub fn with_bits(mut self, weight_bits: u32, activation_bits: u32) -> Self {
        self.weight_bits = weight_bits;
        self.activation_bits = activation_bits;
        self
    }

    /// Signed unit level set for weights; 2 bits always give `{-1, 0, 1}`.
    pub fn weight_levels(&self) -> Result<LevelSet> {
        if self.weight_bits == 2 {
            return build_uniform(1.0, 2, true);
        }
        build_levels(self.scheme, 1.0, self.weight_bits, true)
    }

    /// Unsigned unit level set for activations.
    pub fn activation_levels(&self) -> Result<LevelSet> {
        build_levels(self.scheme, 1.0, self.activation_bits, false)
    }

    /// Activations at 32 bits or more pass through unquantized.
    pub fn activations_quantized(&self) -> bool {
        self.activation_bits < FULL_PRECISION_BITS
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_w", self.alpha_w), ("alpha_x", self.alpha_x)] {
            if !(a.is_finite() && a > 0.0) {
                return config(format!("{name} must be finite and > 0, got {a}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return config(format!("eps must be finite and > 0, got {}", self.eps));
        }
        self.weight_levels()?;
        if self.activations_quantized() {
            self.activation_levels()?;
        }
        Ok(())
    }
}

/// Threshold gradient split by branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AlphaGrad {
    /// `Σ g_i · ∂x̂_i/∂α` over all elements, index order.
    pub total: f64,
    /// Contribution of clipped elements.
    pub clip: f64,
    /// Contribution of elements inside the range.
    pub proj: f64,
}

#[derive(Debug, Clone)]
pub struct WeightCache {
    raw: Vec<f64>,
    stats: Option<NormStats>,
    d_alpha: Vec<f64>,
    pass: Vec<f64>,
    clipped: Vec<bool>,
    indices: Vec<u32>,
    alpha: f64,
}

impl WeightCache {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub fn clipped_mask(&self) -> &[bool] {
        &self.clipped
    }

    /// Level indices into the unit weight set.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

#[derive(Debug, Clone)]
pub struct ActivationCache {
    d_alpha: Vec<f64>,
    pass: Vec<f64>,
    clipped: Vec<bool>,
    indices: Vec<u32>,
    alpha: f64,
}

impl ActivationCache {
    pub fn len(&self) -> usize {
        self.d_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_alpha.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn clipped_mask(&self) -> &[bool] {
        &self.clipped
    }

    /// Level indices into the unit activation set; empty when activations
    /// are not quantized.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Forward state of one layer.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub weights: WeightCache,
    pub activations: ActivationCache,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantLayerGrads {
    /// `∂L/∂W` on the full-precision weights.
    pub g_w: Vec<f64>,
    /// `∂L/∂X` on the layer input.
    pub g_x: Vec<f64>,
    pub g_alpha_w: f64,
    pub g_alpha_x: f64,
    pub alpha_w_parts: AlphaGrad,
    pub alpha_x_parts: AlphaGrad,
}

/// A configured weight/activation quantizer with its unit level sets built once.
#[derive(Debug, Clone)]
pub struct Quantizer {
    cfg: QuantConfig,
    weight_levels: Arc<LevelSet>,
    activation_levels: Option<Arc<LevelSet>>,
}

impl Quantizer {
    pub fn new(cfg: QuantConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Quantizer {
            weight_levels: Arc::new(cfg.weight_levels()?),
            activation_levels: if cfg.activations_quantized() {
                Some(Arc::new(cfg.activation_levels()?))
            } else {
                None
            },
            cfg,
        })
    }

    pub fn config(&self) -> &QuantConfig {
        &self.cfg
    }

    pub fn weight_levels(&self) -> &Arc<LevelSet> {
        &self.weight_levels
    }

    /// `None` when activations are kept at full precision.
    pub fn activation_levels(&self) -> Option<&Arc<LevelSet>> {
        self.activation_levels.as_ref()
    }

    /// Quantizes a weight tensor at threshold `alpha_w`.
    pub fn quantize_weights(&self, w: &[f64], alpha_w: f64) -> Result<(Vec<f64>, WeightCache)> {
        let (normalized, stats) = if self.cfg.weight_norm {
            let (wn, s) = wnorm::normalize_with_eps(w, self.cfg.eps)?;
            (wn, Some(s))
        } else {
            (w.to_vec(), None)
        };
        let p = rcf_pass(
            &normalized,
            alpha_w,
            &self.weight_levels,
            self.cfg.ste_mode,
            self.cfg.relaxed,
        )?;
        let cache = WeightCache {
            raw: w.to_vec(),
            stats,
            d_alpha: p.grad.d_alpha,
            pass: p.grad.d_w,
            clipped: p.grad.clipped_mask,
            indices: p.indices,
            alpha: alpha_w,
        };
        Ok((p.output, cache))
    }

    /// Quantizes non-negative activations at threshold `alpha_x`.
    pub fn quantize_activations(&self, x: &[f64], alpha_x: f64) -> Result<(Vec<f64>, ActivationCache)> {
        if let Some(v) = x.iter().find(|&&v| v < 0.0) {
            return input(format!("activations must be non-negative, got {v}"));
        }
        let Some(levels) = &self.activation_levels else {
            let n = x.len();
            let cache = ActivationCache {
                d_alpha: vec![0.0; n],
                pass: vec![1.0; n],
                clipped: vec![false; n],
                indices: Vec::new(),
                alpha: alpha_x,
            };
            return Ok((x.to_vec(), cache));
        };
        let p = rcf_pass(x, alpha_x, levels, self.cfg.ste_mode, self.cfg.relaxed)?;
        let cache = ActivationCache {
            d_alpha: p.grad.d_alpha,
            pass: p.grad.d_w,
            clipped: p.grad.clipped_mask,
            indices: p.indices,
            alpha: alpha_x,
        };
        Ok((p.output, cache))
    }

    /// The quantized weights of `cache` as level indices into the set scaled to `α_W`.
    pub fn quantized_weights(&self, cache: &WeightCache, shape: Vec<usize>) -> Result<QuantizedTensor> {
        let ls = Arc::new(self.weight_levels.with_alpha(cache.alpha)?);
        QuantizedTensor::new(cache.indices.clone(), shape, ls)
    }
}

fn alpha_grad(d_alpha: &[f64], clipped: &[bool], upstream: &[f64]) -> AlphaGrad {
    let mut g = AlphaGrad::default();
    for ((d, &c), u) in d_alpha.iter().zip(clipped).zip(upstream) {
        let t = u * d;
        g.total += t;
        if c {
            g.clip += t;
        } else {
            g.proj += t;
        }
    }
    g
}

/// `∂L/∂W` and the threshold gradient from `∂L/∂Ŵ`.
pub fn weights_backward(cache: &WeightCache, upstream: &[f64]) -> Result<(Vec<f64>, AlphaGrad)> {
    if upstream.len() != cache.len() {
        return Err(Error::Usage(format!(
            "weight cache holds {} elements but the upstream gradient has {}",
            cache.len(),
            upstream.len()
        )));
    }
    let g_alpha = alpha_grad(&cache.d_alpha, &cache.clipped, upstream);
    let g_norm: Vec<f64> = upstream.iter().zip(&cache.pass).map(|(g, p)| g * p).collect();
    let g_w = match &cache.stats {
        Some(stats) => wnorm::normalize_backward_with_stats(&cache.raw, &g_norm, stats)?,
        None => g_norm,
    };
    Ok((g_w, g_alpha))
}

/// `∂L/∂X` and the threshold gradient from `∂L/∂X̂`.
pub fn activations_backward(cache: &ActivationCache, upstream: &[f64]) -> Result<(Vec<f64>, AlphaGrad)> {
    if upstream.len() != cache.len() {
        return Err(Error::Usage(format!(
            "activation cache holds {} elements but the upstream gradient has {}",
            cache.len(),
            upstream.len()
        )));
    }
    let g_alpha = alpha_grad(&cache.d_alpha, &cache.clipped, upstream);
    let g_x = upstream.iter().zip(&cache.pass).map(|(g, p)| g * p).collect();
    Ok((g_x, g_alpha))
}

/// Chains `∂L/∂Ŵ` and `∂L/∂X̂` back to the weights, input and both thresholds.
pub fn backward(cache: &LayerCache, upstream_w_hat: &[f64], upstream_x_hat: &[f64]) -> Result<QuantLayerGrads> {
    let (g_w, aw) = weights_backward(&cache.weights, upstream_w_hat)?;
    let (g_x, ax) = activations_backward(&cache.activations, upstream_x_hat)?;
    Ok(QuantLayerGrads {
        g_w,
        g_x,
        g_alpha_w: aw.total,
        g_alpha_x: ax.total,
        alpha_w_parts: aw,
        alpha_x_parts: ax,
    })
}

/// One-shot weight quantization at `cfg.alpha_w`.
pub fn quantize_weights(w: &[f64], cfg: &QuantConfig) -> Result<(Vec<f64>, WeightCache)> {
    Quantizer::new(*cfg)?.quantize_weights(w, cfg.alpha_w)
}

/// One-shot activation quantization at `cfg.alpha_x`.
pub fn quantize_activations(x: &[f64], cfg: &QuantConfig) -> Result<(Vec<f64>, ActivationCache)> {
    Quantizer::new(*cfg)?.quantize_activations(x, cfg.alpha_x)
}
