//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use apot::Scheme;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pow2_neg(e: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << e)
}

/// Every (scheme, bits, signed) the library supports for `bits` in `lo..=hi`.
pub fn supported_sets(lo: u32, hi: u32) -> Vec<(Scheme, u32, bool)> {
    let mut out = Vec::new();
    for bits in lo..=hi {
        for signed in [false, true] {
            let m = if signed { bits - 1 } else { bits };
            if m == 0 {
                continue;
            }
            out.push((Scheme::Uniform, bits, signed));
            if bits >= 2 {
                out.push((Scheme::PoT, bits, signed));
            }
            for k in 1..=m {
                if m % k == 0 || k == 2 {
                    out.push((Scheme::APoT { base_bits: k }, bits, signed));
                }
            }
        }
    }
    out
}

/// Level values divided by α, sorted, from the closed-form definitions.
pub fn oracle_ratios(scheme: Scheme, bits: u32, signed: bool) -> Vec<BigRational> {
    let m = if signed { bits - 1 } else { bits };
    let mags: Vec<BigRational> = match scheme {
        Scheme::Uniform => {
            let top = BigInt::from((1u64 << m) - 1);
            (0..1u64 << m).map(|j| BigRational::new(BigInt::from(j), top.clone())).collect()
        }
        Scheme::PoT => {
            let smallest = if signed { (1u32 << (bits - 1)) - 1 } else { (1u32 << bits) - 2 };
            std::iter::once(BigRational::zero()).chain((0..=smallest).map(pow2_neg)).collect()
        }
        Scheme::APoT { base_bits: k } => {
            // One list of candidate terms per additive term.
            let terms: Vec<Vec<BigRational>> = if m % k == 0 {
                let n = m / k;
                (0..n)
                    .map(|i| {
                        let mut t = vec![BigRational::zero()];
                        t.extend((0..(1u32 << k) - 1).map(|j| pow2_neg(i + j * n)));
                        t
                    })
                    .collect()
            } else {
                assert_eq!(k, 2);
                let n = (m - 1) / 2;
                let mut t: Vec<Vec<BigRational>> = (0..n)
                    .map(|i| vec![BigRational::zero(), pow2_neg(i), pow2_neg(i + n), pow2_neg(i + 2 * n + 1)])
                    .collect();
                t.push(vec![BigRational::zero(), pow2_neg(2 * n)]);
                t
            };
            // Mixed-radix walk over all combinations.
            let total: usize = terms.iter().map(|t| t.len()).product();
            let mut sums = Vec::with_capacity(total);
            for mut code in 0..total {
                let mut s = BigRational::zero();
                for t in &terms {
                    s += &t[code % t.len()];
                    code /= t.len();
                }
                sums.push(s);
            }
            let max = sums.iter().max().cloned().expect("non-empty");
            sums.into_iter().map(|s| s / &max).collect()
        }
    };
    let mut all: Vec<BigRational> = mags.clone();
    if signed {
        all.extend(mags.iter().filter(|v| !v.is_zero()).map(|v| -v));
    }
    all.sort();
    all.dedup();
    all
}

/// Linear-scan nearest level; ties go to the smaller magnitude.
pub fn brute_nearest(levels: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, &l) in levels.iter().enumerate() {
        let (d, bd) = ((x - l).abs(), (x - levels[best]).abs());
        if d < bd || (d == bd && l.abs() < levels[best].abs()) {
            best = i;
        }
    }
    best
}
