//! Seeded synthetic classification data and CSV ingestion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{input, Error, Result};

/// Row-major features with integer labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return input("dataset needs at least one sample and one feature");
        }
        if features.len() != labels.len() * dim {
            return input(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            ));
        }
        if let Some(x) = features.iter().find(|x| !x.is_finite()) {
            return input(format!("non-finite feature {x}"));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Ok(Dataset { features, labels, dim, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers rows `idx` into a contiguous batch.
    pub fn batch(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Fits per-feature min-max scaling to `[0, 1]` on this set.
    pub fn fit_scaler(&self) -> MinMaxScaler {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for r in 0..self.len() {
            for (j, &v) in self.row(r).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        MinMaxScaler { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMaxScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MinMaxScaler {
    /// Scales in place; values outside the fitted range are clamped to `[0, 1]`.
    pub fn apply(&self, d: &mut Dataset) -> Result<()> {
        if d.dim != self.lo.len() {
            return input(format!("scaler fitted on {} features, data has {}", self.lo.len(), d.dim));
        }
        for row in d.features.chunks_mut(self.lo.len()) {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.hi[j] - self.lo[j];
                *v = if span > 0.0 { ((*v - self.lo[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Ok(())
    }
}

/// Two Gaussian clusters at `(-1, -1)` and `(1, 1)` with spread `std`;
/// linearly separable for small `std`.
pub fn two_clusters(n: usize, std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let c = if label == 0 { -1.0 } else { 1.0 };
        features.push(c + noise.sample(&mut rng));
        features.push(c + noise.sample(&mut rng));
        labels.push(label);
    }
    Dataset::new(features, labels, 2)
}

/// `classes` Gaussian blobs in `dim` dimensions. Centers are drawn from
/// `N(0, 1)` per coordinate, samples add `N(0, std²)` noise.
pub fn gaussian_blobs(n: usize, dim: usize, classes: usize, std: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || dim == 0 {
        return input(format!("blobs need at least 2 classes and 1 dimension, got {classes} and {dim}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let centers: Vec<f64> = (0..classes * dim).map(|_| unit.sample(&mut rng)).collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        for j in 0..dim {
            features.push(centers[label * dim + j] + noise.sample(&mut rng));
        }
        labels.push(label);
    }
    let mut d = Dataset::new(features, labels, dim)?;
    d.classes = classes;
    Ok(d)
}

/// Two interleaved half circles with Gaussian noise.
pub fn two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = rng.random::<f64>() * std::f64::consts::PI;
        let (x, y) = if label == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        features.push(x + noise.sample(&mut rng));
        features.push(y + noise.sample(&mut rng));
        labels.push(label);
    }
    Dataset::new(features, labels, 2)
}

/// Parses `label,f1,...,fn` rows. A first row whose label is not an integer is
/// taken as a header and skipped.
pub fn from_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("csv: {e}")))?;
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        let label = match rec[0].parse::<usize>() {
            Ok(l) => l,
            Err(_) if i == 0 => continue,
            Err(_) => return input(format!("row {}: bad label `{}`", i + 1, &rec[0])),
        };
        let d = rec.len() - 1;
        if *dim.get_or_insert(d) != d {
            return input(format!("row {}: expected {} features, got {d}", i + 1, dim.unwrap_or(0)));
        }
        for f in rec.iter().skip(1) {
            features.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Input(format!("row {}: bad feature `{f}`", i + 1)))?,
            );
        }
        labels.push(label);
    }
    Dataset::new(features, labels, dim.unwrap_or(0))
}
