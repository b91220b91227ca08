//! Quantization-error diagnostics.
//!
//! - [`error_decompose`] splits the mean squared quantization error into the
//!   clipping part (outliers pulled back to `±α`) and the projection part
//!   (in-range values rounded to a level).
//! - [`qem_search`] picks `α` by minimizing that error over a grid.
//! - [`lloyd_levels`] is the MSE-greedy non-uniform baseline.
//! - [`clipping_ratio_curve`] tracks the fraction of clipped weights.

use serde::Serialize;

use crate::error::{config, input, Result};
use crate::levels::{build_levels, build_uniform, LevelSet, Scheme};
use crate::rcf::rcf_pass;
use crate::rcf::SteMode;

/// Default number of grid points for the threshold search.
pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorDecomposition {
    pub delta_clip: f64,
    pub delta_proj: f64,
    pub delta: f64,
}

impl ErrorDecomposition {
    /// `|Δ - (Δ_clip + Δ_proj)| / max(Δ, tiny)`.
    pub fn identity_residual(&self) -> f64 {
        let sum = self.delta_clip + self.delta_proj;
        (self.delta - sum).abs() / self.delta.abs().max(f64::MIN_POSITIVE)
    }
}

/// Signed unit level set for weights (2 bits is always ternary).
pub fn weight_level_set(scheme: Scheme, bits: u32) -> Result<LevelSet> {
    if bits == 2 {
        build_uniform(1.0, 2, true)
    } else {
        build_levels(scheme, 1.0, bits, true)
    }
}

/// Decomposes the error of quantizing `w` at threshold `alpha` against
/// `unit_levels` (built at `α = 1`).
pub fn error_decompose(w: &[f64], alpha: f64, unit_levels: &LevelSet) -> Result<ErrorDecomposition> {
    if w.is_empty() {
        return input("error decomposition of an empty tensor");
    }
    let pass = rcf_pass(w, alpha, unit_levels, SteMode::Clipped, false)?;
    let n = w.len() as f64;
    let (mut clip, mut proj, mut total) = (0.0, 0.0, 0.0);
    for ((&x, &q), &c) in w.iter().zip(&pass.output).zip(&pass.grad.clipped_mask) {
        let e = (x - q) * (x - q);
        total += e;
        if c {
            let over = x.abs() - alpha;
            clip += over * over;
        } else {
            proj += e;
        }
    }
    Ok(ErrorDecomposition { delta_clip: clip / n, delta_proj: proj / n, delta: total / n })
}

/// `points` log-spaced thresholds from `0.1 · std(w)` to `max |w|`.
pub fn default_grid(w: &[f64], points: usize) -> Result<Vec<f64>> {
    if w.len() < 2 {
        return input("threshold grid needs at least 2 samples");
    }
    if points < 2 {
        return config("threshold grid needs at least 2 points");
    }
    let n = w.len() as f64;
    let mu = w.iter().sum::<f64>() / n;
    let std = (w.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt();
    let hi = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lo = 0.1 * std;
    if !(lo > 0.0 && hi.is_finite()) {
        return input("threshold grid needs finite samples with nonzero spread");
    }
    if lo >= hi {
        return Ok(vec![hi]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QemResult {
    pub alpha: f64,
    pub best: ErrorDecomposition,
    pub curve: Vec<(f64, ErrorDecomposition)>,
}

/// Grid minimizer of the total error. Ties keep the first (smallest) `α`.
pub fn qem_search(w: &[f64], unit_levels: &LevelSet, grid: &[f64]) -> Result<QemResult> {
    if grid.is_empty() {
        return config("empty threshold grid");
    }
    if let Some(a) = grid.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return config(format!("grid thresholds must be finite and > 0, got {a}"));
    }
    let curve = grid
        .iter()
        .map(|&a| error_decompose(w, a, unit_levels).map(|d| (a, d)))
        .collect::<Result<Vec<_>>>()?;
    let (alpha, best) = curve
        .iter()
        .copied()
        .fold(None::<(f64, ErrorDecomposition)>, |acc, (a, d)| match acc {
            Some((_, b)) if b.delta <= d.delta => acc,
            _ => Some((a, d)),
        })
        .expect("grid is non-empty");
    Ok(QemResult { alpha, best, curve })
}

/// Mean squared error of mapping every sample to its nearest value in the
/// sorted list `levels`.
pub fn nearest_mse(w: &[f64], levels: &[f64]) -> Result<f64> {
    if w.is_empty() || levels.is_empty() {
        return input("nearest-level error needs samples and levels");
    }
    let mut sum = 0.0;
    for &x in w {
        let i = levels.partition_point(|&l| l < x);
        let mut best = f64::INFINITY;
        for j in [i.saturating_sub(1), i.min(levels.len() - 1)] {
            best = best.min((x - levels[j]).abs());
        }
        sum += best * best;
    }
    Ok(sum / w.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LloydResult {
    /// Sorted reconstruction levels.
    pub levels: Vec<f64>,
    /// MSE after each assignment, starting with the initial levels.
    pub mse_history: Vec<f64>,
    pub iterations: usize,
    /// Clusters that came up empty and were re-seeded.
    pub reseeds: usize,
}

impl LloydResult {
    pub fn mse(&self) -> f64 {
        *self.mse_history.last().expect("history holds the initial MSE")
    }
}

/// Lloyd-Max quantizer with `num_levels` levels.
///
/// Levels start at sample quantiles. Each iteration assigns samples to the
/// nearest level and moves each level to its cluster mean; an empty cluster is
/// re-seeded at the sample with the largest current error. Stops when the
/// relative MSE improvement drops below `tol` or after `max_iters` iterations.
pub fn lloyd_levels(w: &[f64], num_levels: usize, max_iters: usize, tol: f64) -> Result<LloydResult> {
    if num_levels < 2 {
        return config(format!("Lloyd needs at least 2 levels, got {num_levels}"));
    }
    if !(tol >= 0.0) {
        return config(format!("tolerance must be >= 0, got {tol}"));
    }
    if let Some(x) = w.iter().find(|x| !x.is_finite()) {
        return input(format!("non-finite sample {x}"));
    }
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < num_levels {
        return input(format!(
            "{} distinct samples cannot support {num_levels} levels",
            distinct.len()
        ));
    }

    let mut levels: Vec<f64> = (0..num_levels)
        .map(|j| distinct[((2 * j + 1) * distinct.len()) / (2 * num_levels)])
        .collect();
    levels.dedup();
    let mut history = vec![nearest_mse(&sorted, &levels)?];
    let mut reseeds = 0;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        // Assignment: clusters are contiguous runs of the sorted samples.
        let mut sums = vec![0.0; levels.len()];
        let mut counts = vec![0usize; levels.len()];
        for &x in &sorted {
            let j = nearest_sorted(&levels, x);
            sums[j] += x;
            counts[j] += 1;
        }
        let mut next: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(j, &l)| if counts[j] > 0 { sums[j] / counts[j] as f64 } else { l })
            .collect();
        for j in 0..next.len() {
            if counts[j] == 0 {
                let err = |x: f64| (x - next[nearest_unsorted(&next, x)]).abs();
                let worst = sorted
                    .iter()
                    .copied()
                    .max_by(|a, b| err(*a).total_cmp(&err(*b)))
                    .expect("samples are non-empty");
                next[j] = worst;
                reseeds += 1;
            }
        }
        next.sort_by(f64::total_cmp);
        next.dedup();
        let mse = nearest_mse(&sorted, &next)?;
        let prev = *history.last().expect("non-empty");
        if mse > prev {
            // Rounding in the means can nudge the error up by an ulp; keep the
            // better levels and stop.
            break;
        }
        levels = next;
        history.push(mse);
        if mse == 0.0 || (prev - mse) / prev < tol {
            break;
        }
    }
    Ok(LloydResult { levels, mse_history: history, iterations, reseeds })
}

fn nearest_sorted(levels: &[f64], x: f64) -> usize {
    let i = levels.partition_point(|&l| l < x);
    if i == 0 {
        0
    } else if i == levels.len() || x - levels[i - 1] <= levels[i] - x {
        i - 1
    } else {
        i
    }
}

fn nearest_unsorted(levels: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (j, &l) in levels.iter().enumerate() {
        if (x - l).abs() < (x - levels[best]).abs() {
            best = j;
        }
    }
    best
}

/// Fraction of samples with `|w| > α` for each grid threshold.
pub fn clipping_ratio_curve(w: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if w.is_empty() {
        return input("clipping ratio of an empty tensor");
    }
    let n = w.len() as f64;
    Ok(grid
        .iter()
        .map(|&a| (a, w.iter().filter(|x| x.abs() > a).count() as f64 / n))
        .collect())
}

/// Largest `|Δratio / Δα|` between consecutive points of a curve.
pub fn max_slope(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .filter(|p| p[1].0 != p[0].0)
        .map(|p| ((p[1].1 - p[0].1) / (p[1].0 - p[0].0)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::build_apot;

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn nothing_clipped_above_max() {
        let w = gaussian(500, 1);
        let ls = build_apot(1.0, 4, 2, true).unwrap();
        let m = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let d = error_decompose(&w, m, &ls).unwrap();
        assert_eq!(d.delta_clip, 0.0);
        assert!(d.identity_residual() < 1e-12);
    }

    #[test]
    fn levels_have_zero_error() {
        let ls = build_apot(1.0, 4, 2, true).unwrap();
        let w: Vec<f64> = ls.values().iter().map(|v| v * 2.5).collect();
        let d = error_decompose(&w, 2.5, &ls).unwrap();
        assert_eq!(d.delta, 0.0);
    }

    #[test]
    fn ternary_pair_qem() {
        let ls = weight_level_set(Scheme::APoT { base_bits: 2 }, 2).unwrap();
        let w = [-1.0, 1.0];
        let grid = default_grid(&w, 64).unwrap();
        let r = qem_search(&w, &ls, &grid).unwrap();
        assert_eq!(r.alpha, 1.0);
        assert_eq!(r.best.delta, 0.0);
    }

    #[test]
    fn lloyd_two_points() {
        let r = lloyd_levels(&[-1.0, 1.0, -1.0, 1.0], 2, 20, 1e-9).unwrap();
        assert_eq!(r.levels, vec![-1.0, 1.0]);
        assert_eq!(r.mse(), 0.0);
    }

    #[test]
    fn lloyd_is_monotone() {
        let w = gaussian(2000, 7);
        let r = lloyd_levels(&w, 16, 100, 0.0).unwrap();
        assert!(r.mse_history.windows(2).all(|p| p[1] <= p[0]));
        assert!(r.levels.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn lloyd_errors() {
        assert!(lloyd_levels(&[1.0, 1.0, 1.0], 2, 10, 0.0).is_err());
        assert!(lloyd_levels(&[1.0, 2.0], 1, 10, 0.0).is_err());
    }

    #[test]
    fn clip_ratio_ends() {
        let w = [0.0, 0.5, -1.0, 2.0];
        let c = clipping_ratio_curve(&w, &[1e-9, 2.0]).unwrap();
        assert_eq!(c[0].1, 0.75);
        assert_eq!(c[1].1, 0.0);
    }

    #[test]
    fn empty_is_error() {
        let ls = build_apot(1.0, 4, 2, true).unwrap();
        assert!(error_decompose(&[], 1.0, &ls).is_err());
        assert!(qem_search(&[1.0], &ls, &[]).is_err());
    }
}
