//! Per-layer weight normalization `w̃ = (w - μ) / (σ + ε)`.
//!
//! `σ` is the population standard deviation (divisor `I`). The backward pass
//! differentiates through `μ` and `σ`, so it is the exact vector-Jacobian
//! product of the transform.

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
    pub eps: f64,
    pub count: usize,
}

impl NormStats {
    pub fn compute(w: &[f64], eps: f64) -> Result<NormStats> {
        if !(eps.is_finite() && eps > 0.0) {
            return config(format!("eps must be finite and > 0, got {eps}"));
        }
        if w.len() < 2 {
            return input(format!("normalization needs at least 2 elements, got {}", w.len()));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite()) {
            return input(format!("non-finite weight {x}"));
        }
        let count = w.len();
        let n = count as f64;
        let mu = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / n;
        Ok(NormStats { mu, sigma: var.sqrt(), eps, count })
    }

    /// `σ + ε`.
    pub fn denom(&self) -> f64 {
        self.sigma + self.eps
    }
}

pub fn normalize(w: &[f64]) -> Result<(Vec<f64>, NormStats)> {
    normalize_with_eps(w, DEFAULT_EPS)
}

pub fn normalize_with_eps(w: &[f64], eps: f64) -> Result<(Vec<f64>, NormStats)> {
    let stats = NormStats::compute(w, eps)?;
    let d = stats.denom();
    Ok((w.iter().map(|&x| (x - stats.mu) / d).collect(), stats))
}

pub fn normalize_backward(w: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    let stats = NormStats::compute(w, DEFAULT_EPS)?;
    normalize_backward_with_stats(w, upstream, &stats)
}

/// Vector-Jacobian product of the normalization at `w` with precomputed stats.
///
/// With `c = w - μ` and `d = σ + ε`:
/// `∂L/∂w_j = (g_j - mean(g)) / d - (Σ_i g_i c_i) c_j / (I σ d²)`.
/// The second term is dropped when `σ = 0`, where `σ` is not differentiable.
pub fn normalize_backward_with_stats(w: &[f64], upstream: &[f64], stats: &NormStats) -> Result<Vec<f64>> {
    if w.len() != upstream.len() {
        return input(format!(
            "upstream gradient has {} elements, weights have {}",
            upstream.len(),
            w.len()
        ));
    }
    if w.len() != stats.count {
        return input(format!("stats cover {} elements, weights have {}", stats.count, w.len()));
    }
    let n = w.len() as f64;
    let d = stats.denom();
    let g_mean = upstream.iter().sum::<f64>() / n;
    let gc: f64 = upstream.iter().zip(w).map(|(g, x)| g * (x - stats.mu)).sum();
    let radial = if stats.sigma > 0.0 { gc / (n * stats.sigma * d * d) } else { 0.0 };
    Ok(upstream
        .iter()
        .zip(w)
        .map(|(g, x)| (g - g_mean) / d - radial * (x - stats.mu))
        .collect())
}
