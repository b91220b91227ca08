//! Finite-difference checks of the analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::error::{config, Result};
use crate::levels::LevelSet;
use crate::rcf::{rcf_forward, rcf_grad_alpha};
use crate::wnorm;

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Gradient of `f` at `x` by central differences, one coordinate at a time.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = probe[i];
        probe[i] = x0 + h;
        let up = f(&probe)?;
        probe[i] = x0 - h;
        let down = f(&probe)?;
        probe[i] = x0;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `‖a - b‖∞ / max(‖b‖∞, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}

/// `true` if `v` lies within `margin` of a midpoint between adjacent levels,
/// where the projection jumps.
pub fn near_cell_boundary(v: f64, unit_levels: &LevelSet, margin: f64) -> bool {
    unit_levels
        .values()
        .windows(2)
        .any(|p| (v - 0.5 * (p[0] + p[1])).abs() < margin)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub samples: usize,
    pub alpha: f64,
    /// Outlier elements checked against finite differences in `α`.
    pub outlier_count: usize,
    pub outlier_max_abs_error: f64,
    /// Interior elements checked against the closed-form estimator.
    pub interior_count: usize,
    pub interior_max_abs_error: f64,
    /// Largest interior estimator magnitude relative to the largest half gap.
    pub interior_bound_ratio: f64,
    /// Normalization backward vs finite differences, one 64-element instance.
    pub wnorm_max_rel_error: f64,
}

/// Runs the threshold-gradient and normalization checks on `samples` draws
/// from `N(0, (1.5 α)²)`.
pub fn rcf_gradcheck(unit_levels: &LevelSet, alpha: f64, samples: usize, seed: u64) -> Result<GradcheckReport> {
    if samples == 0 {
        return config("gradcheck needs at least one sample");
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return config(format!("clipping threshold must be finite and > 0, got {alpha}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 1.5 * alpha).map_err(|e| crate::Error::Config(e.to_string()))?;
    let w: Vec<f64> = (0..samples).map(|_| dist.sample(&mut rng)).collect();
    let grad = rcf_grad_alpha(&w, alpha, unit_levels)?;

    let margin = 1e-3;
    let h = 1e-6 * alpha;
    let (mut outlier_count, mut outlier_err) = (0, 0.0f64);
    let (mut interior_count, mut interior_err, mut interior_max) = (0, 0.0f64, 0.0f64);
    for (i, &x) in w.iter().enumerate() {
        if x.abs() > alpha * (1.0 + margin) {
            let fd = central_diff(|a| Ok(rcf_forward(&[x], a, unit_levels)?[0]), alpha, h)?;
            outlier_err = outlier_err.max((fd - grad.d_alpha[i]).abs());
            outlier_count += 1;
        } else if x.abs() <= alpha {
            let v = x / alpha;
            let expected = unit_levels.nearest(v) - v;
            interior_err = interior_err.max((expected - grad.d_alpha[i]).abs());
            interior_max = interior_max.max(grad.d_alpha[i].abs());
            interior_count += 1;
        }
    }
    let half_gap = unit_levels
        .values()
        .windows(2)
        .map(|p| 0.5 * (p[1] - p[0]))
        .fold(0.0, f64::max);

    let wn: Vec<f64> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
    let up: Vec<f64> = (0..64).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(GradcheckReport {
        samples,
        alpha,
        outlier_count,
        outlier_max_abs_error: outlier_err,
        interior_count,
        interior_max_abs_error: interior_err,
        interior_bound_ratio: interior_max / half_gap,
        wnorm_max_rel_error: wnorm_check(&wn, &up, 1e-5)?,
    })
}

/// Max relative error of the normalization backward against central
/// differences of `L = Σ upstream_i · normalize(w)_i`.
pub fn wnorm_check(w: &[f64], upstream: &[f64], h: f64) -> Result<f64> {
    let analytic = wnorm::normalize_backward(w, upstream)?;
    let loss = |x: &[f64]| -> Result<f64> {
        let (n, _) = wnorm::normalize(x)?;
        Ok(n.iter().zip(upstream).map(|(a, b)| a * b).sum())
    };
    let fd = fd_gradient(loss, w, h)?;
    Ok(max_rel_error(&analytic, &fd, 1e-12))
}
