mod common;

use apot::analysis::{
    clipping_ratio_curve, default_grid, error_decompose, lloyd_levels, max_slope, nearest_mse, qem_search,
    weight_level_set, DEFAULT_GRID_POINTS,
};
use apot::{normalize, rcf_forward, Scheme};
use common::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn gaussian(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            std * z
        })
        .collect()
}

#[test]
fn decomposition_identity_holds() {
    let mut r = rng(1);
    let schemes = [Scheme::APoT { base_bits: 2 }, Scheme::PoT, Scheme::Uniform];
    let mut worst = 0.0f64;
    for t in 0..1000 {
        let scheme = schemes[t % 3];
        let bits = r.random_range(2..=8);
        let unit = weight_level_set(scheme, bits).unwrap();
        let std = r.random_range(0.01..5.0);
        let w = gaussian(r.random_range(2..400), std, r.random());
        let alpha = r.random_range(0.05..4.0) * std;
        let d = error_decompose(&w, alpha, &unit).unwrap();
        worst = worst.max(d.identity_residual());
    }
    assert!(worst < 1e-12, "worst relative residual {worst}");
}

#[test]
fn projection_term_matches_forward_error_on_unclipped() {
    let w = gaussian(2000, 1.0, 3);
    for scheme in [Scheme::APoT { base_bits: 2 }, Scheme::PoT] {
        let unit = weight_level_set(scheme, 4).unwrap();
        let alpha = 1.4;
        let out = rcf_forward(&w, alpha, &unit).unwrap();
        let proj: f64 = w
            .iter()
            .zip(&out)
            .filter(|(x, _)| x.abs() <= alpha)
            .map(|(x, q)| (x - q) * (x - q))
            .sum::<f64>()
            / w.len() as f64;
        let d = error_decompose(&w, alpha, &unit).unwrap();
        assert!((d.delta_proj - proj).abs() <= 1e-15 * proj.max(1.0));
    }
}

#[test]
fn threshold_search_returns_grid_minimum() {
    let w = gaussian(5000, 0.8, 4);
    let unit = weight_level_set(Scheme::APoT { base_bits: 2 }, 5).unwrap();
    let grid = default_grid(&w, DEFAULT_GRID_POINTS).unwrap();
    assert_eq!(grid.len(), DEFAULT_GRID_POINTS);
    assert!(grid.windows(2).all(|p| p[0] < p[1]));
    let res = qem_search(&w, &unit, &grid).unwrap();
    for (_, d) in &res.curve {
        assert!(res.best.delta <= d.delta);
    }
    assert!(grid.contains(&res.alpha));
}

#[test]
fn lloyd_then_apot_then_pot() {
    let w = gaussian(10_000, 1.0, 5);
    let grid = default_grid(&w, DEFAULT_GRID_POINTS).unwrap();
    let best = |s| {
        let unit = weight_level_set(s, 5).unwrap();
        qem_search(&w, &unit, &grid).unwrap().best.delta
    };
    let apot = best(Scheme::APoT { base_bits: 2 });
    let pot = best(Scheme::PoT);
    let count = weight_level_set(Scheme::APoT { base_bits: 2 }, 5).unwrap().len();
    let lloyd = lloyd_levels(&w, count, 200, 1e-12).unwrap();
    assert!(lloyd.mse() <= apot, "lloyd {} apot {apot}", lloyd.mse());
    assert!(apot <= pot, "apot {apot} pot {pot}");
}

#[test]
fn lloyd_is_monotone_and_a_fixed_point() {
    for seed in 0..5 {
        let w = gaussian(3000, 1.0, 100 + seed);
        let res = lloyd_levels(&w, 8, 500, 1e-14).unwrap();
        assert!(res.mse_history.windows(2).all(|p| p[1] <= p[0]));
        assert!((nearest_mse(&w, &res.levels).unwrap() - res.mse()).abs() < 1e-12);
        // Every centroid is the mean of its cell at convergence.
        let bounds: Vec<f64> = res.levels.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        for (j, &c) in res.levels.iter().enumerate() {
            let lo = if j == 0 { f64::NEG_INFINITY } else { bounds[j - 1] };
            let hi = bounds.get(j).copied().unwrap_or(f64::INFINITY);
            let cell: Vec<f64> = w.iter().copied().filter(|&x| x > lo && x <= hi).collect();
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            assert!((mean - c).abs() < 1e-4, "centroid {c} vs cell mean {mean}");
        }
    }
    let two = lloyd_levels(&[-1.0, 1.0], 2, 10, 0.0).unwrap();
    assert_eq!(two.levels, vec![-1.0, 1.0]);
    assert_eq!(two.mse(), 0.0);
}

#[test]
fn clipping_ratio_curve_shape() {
    let w = gaussian(4000, 1.0, 6);
    let max = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let grid: Vec<f64> = (1..=200).map(|i| max * i as f64 / 200.0).collect();
    let curve = clipping_ratio_curve(&w, &grid).unwrap();
    assert!(curve.windows(2).all(|p| p[1].1 <= p[0].1));
    assert_eq!(curve.last().unwrap().1, 0.0);
    let tiny = clipping_ratio_curve(&[0.0, 0.0, 1.0, -2.0], &[1e-12]).unwrap();
    assert_eq!(tiny[0].1, 0.5);
}

#[test]
fn normalization_flattens_the_clipping_curve() {
    // A narrow and a wide component, with the small overall scale of trained weights.
    let mut r = rng(7);
    let narrow = Normal::new(0.0, 0.02).unwrap();
    let wide = Normal::new(0.0, 0.15).unwrap();
    let w: Vec<f64> = (0..8000)
        .map(|i| if i % 4 == 0 { wide.sample(&mut r) } else { narrow.sample(&mut r) })
        .collect();
    let (wn, _) = normalize(&w).unwrap();
    let grid: Vec<f64> = (1..=300).map(|i| 0.01 * i as f64).collect();
    let raw = max_slope(&clipping_ratio_curve(&w, &grid).unwrap());
    let norm = max_slope(&clipping_ratio_curve(&wn, &grid).unwrap());
    assert!(norm < raw, "normalized {norm} vs raw {raw}");
}
