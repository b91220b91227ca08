//! A two-layer dense network trained with manual backpropagation.
//!
//! Each layer quantizes its input activations and its (normalized) weights,
//! then computes `z = x̂ ŵᵀ + b`. The hidden layer uses ReLU and the output
//! feeds softmax cross-entropy. Weights, biases and both clipping thresholds
//! of every layer are updated jointly by SGD with momentum. Biases stay in
//! full precision.
//!
//! Normalized weights have unit variance whatever the fan-in, and there is no
//! batch normalization here to absorb that, so with weight normalization on the
//! product `x̂ ŵᵀ` is multiplied by the fixed He-init gain `sqrt(2 / fan_in)`
//! before the bias is added. The gain is a constant applied once per output,
//! after accumulation, in the same place as `γ` and the thresholds.

pub mod checkpoint;
pub mod data;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::quantizer::{backward, AlphaGrad, LayerCache, QuantConfig, Quantizer};
use crate::shiftadd::cost::{cost_report, CostModel, LayerDef, LayerRole};
use crate::shiftadd::{apot_mac, direct_product, FixedPointActivation, MacAccumulator};

pub use data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// `None` trains in full precision.
    pub quant: Option<QuantConfig>,
    /// Initial `α_X` of the first layer, whose inputs are scaled to `[0, 1]`.
    pub input_alpha_x: f64,
}

impl ModelSpec {
    pub fn new(input_dim: usize, classes: usize, quant: Option<QuantConfig>) -> Self {
        ModelSpec { input_dim, hidden: 32, classes, quant, input_alpha_x: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.classes < 2 {
            return config(format!(
                "bad architecture {}-{}-{}",
                self.input_dim, self.hidden, self.classes
            ));
        }
        if !(self.input_alpha_x.is_finite() && self.input_alpha_x > 0.0) {
            return config(format!("input alpha must be > 0, got {}", self.input_alpha_x));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha_w: f64,
    pub alpha_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha_w: f64,
    pub alpha_x: f64,
    pub alpha_w_parts: AlphaGrad,
    pub alpha_x_parts: AlphaGrad,
}

struct LayerForward {
    x_hat: Vec<f64>,
    w_hat: Vec<f64>,
    z: Vec<f64>,
    cache: Option<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    spec: ModelSpec,
    pub layers: Vec<DenseLayer>,
    quantizer: Option<Quantizer>,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

impl MlpModel {
    /// He-normal weights, zero biases, thresholds from the config.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (aw, ax) = spec.quant.map_or((1.0, 1.0), |q| (q.alpha_w, q.alpha_x));
        let dims = [(spec.hidden, spec.input_dim, spec.input_alpha_x), (spec.classes, spec.hidden, ax)];
        let mut layers = Vec::with_capacity(2);
        for (out_dim, in_dim, alpha_x) in dims {
            let dist = Normal::new(0.0, (2.0 / in_dim as f64).sqrt())
                .map_err(|e| Error::Config(e.to_string()))?;
            layers.push(DenseLayer {
                out_dim,
                in_dim,
                w: (0..out_dim * in_dim).map(|_| dist.sample(&mut rng)).collect(),
                b: vec![0.0; out_dim],
                alpha_w: aw,
                alpha_x,
            });
        }
        Self::from_layers(spec, layers)
    }

    pub fn from_layers(spec: ModelSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        spec.validate()?;
        let dims = [(spec.hidden, spec.input_dim), (spec.classes, spec.hidden)];
        if layers.len() != 2
            || layers.iter().zip(dims).any(|(l, (o, i))| {
                l.out_dim != o || l.in_dim != i || l.w.len() != o * i || l.b.len() != o
            })
        {
            return config("layer shapes do not match the model spec");
        }
        let quantizer = spec.quant.map(Quantizer::new).transpose()?;
        Ok(MlpModel { spec, layers, quantizer })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn quantizer(&self) -> Option<&Quantizer> {
        self.quantizer.as_ref()
    }

    /// Fixed output gain of layer `index`: `sqrt(2 / fan_in)` with weight
    /// normalization, else 1.
    pub fn layer_gain(&self, index: usize) -> f64 {
        match self.spec.quant {
            Some(q) if q.weight_norm => (2.0 / self.layers[index].in_dim as f64).sqrt(),
            _ => 1.0,
        }
    }

    pub fn alphas_w(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.alpha_w).collect()
    }

    pub fn alphas_x(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.alpha_x).collect()
    }

    fn forward_cached(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<LayerForward>)> {
        if x.len() != batch * self.spec.input_dim {
            return input(format!(
                "batch of {batch} rows needs {} values, got {}",
                batch * self.spec.input_dim,
                x.len()
            ));
        }
        let mut a = x.to_vec();
        let mut trace = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let (x_hat, w_hat, cache) = match &self.quantizer {
                Some(q) => {
                    let (xq, ac) = q.quantize_activations(&a, layer.alpha_x)?;
                    let (wq, wc) = q.quantize_weights(&layer.w, layer.alpha_w)?;
                    (xq, wq, Some(LayerCache { weights: wc, activations: ac }))
                }
                None => (a, layer.w.clone(), None),
            };
            let gain = self.layer_gain(li);
            let z = dense(&x_hat, &w_hat, &layer.b, gain, batch, layer.in_dim, layer.out_dim);
            a = if li + 1 < self.layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            trace.push(LayerForward { x_hat, w_hat, z, cache });
        }
        Ok((a, trace))
    }

    /// Logits, row-major `batch × classes`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x, batch)?.0)
    }

    pub fn loss(&self, x: &[f64], labels: &[usize]) -> Result<f64> {
        let logits = self.forward(x, labels.len())?;
        Ok(softmax_xent(&logits, labels, self.spec.classes)?.0)
    }

    /// Mean cross-entropy over the batch and the gradients of every parameter.
    pub fn loss_and_grads(&self, x: &[f64], labels: &[usize]) -> Result<(f64, Vec<LayerGrads>)> {
        let batch = labels.len();
        let (logits, trace) = self.forward_cached(x, batch)?;
        let (loss, mut dz) = softmax_xent(&logits, labels, self.spec.classes)?;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let f = &trace[li];
            let (o_dim, i_dim) = (layer.out_dim, layer.in_dim);
            let mut dw = vec![0.0; o_dim * i_dim];
            let mut db = vec![0.0; o_dim];
            let mut dx = vec![0.0; batch * i_dim];
            let gain = self.layer_gain(li);
            for n in 0..batch {
                let xr = &f.x_hat[n * i_dim..(n + 1) * i_dim];
                for o in 0..o_dim {
                    let g = dz[n * o_dim + o];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    let g = g * gain;
                    let wr = &f.w_hat[o * i_dim..(o + 1) * i_dim];
                    for i in 0..i_dim {
                        dw[o * i_dim + i] += g * xr[i];
                        dx[n * i_dim + i] += g * wr[i];
                    }
                }
            }
            let (g, g_x) = match &f.cache {
                Some(cache) => {
                    let q = backward(cache, &dw, &dx)?;
                    let g = LayerGrads {
                        w: q.g_w,
                        b: db,
                        alpha_w: q.g_alpha_w,
                        alpha_x: q.g_alpha_x,
                        alpha_w_parts: q.alpha_w_parts,
                        alpha_x_parts: q.alpha_x_parts,
                    };
                    (g, q.g_x)
                }
                None => {
                    let g = LayerGrads {
                        w: dw,
                        b: db,
                        alpha_w: 0.0,
                        alpha_x: 0.0,
                        alpha_w_parts: AlphaGrad::default(),
                        alpha_x_parts: AlphaGrad::default(),
                    };
                    (g, dx)
                }
            };
            if li > 0 {
                dz = relu_backward(&g_x, &trace[li - 1].z);
            }
            grads.push(g);
        }
        grads.reverse();
        Ok((loss, grads))
    }

    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<usize>> {
        let logits = self.forward(x, batch)?;
        Ok(argmax_rows(&logits, self.spec.classes))
    }
}

fn dense(x: &[f64], w: &[f64], b: &[f64], gain: f64, batch: usize, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut z = Vec::with_capacity(batch * out_dim);
    for n in 0..batch {
        let xr = &x[n * in_dim..(n + 1) * in_dim];
        for o in 0..out_dim {
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            z.push(gain * xr.iter().zip(wr).map(|(a, c)| a * c).sum::<f64>() + b[o]);
        }
    }
    z
}

fn relu_backward(g: &[f64], z: &[f64]) -> Vec<f64> {
    g.iter().zip(z).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect()
}

fn argmax_rows(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
fn softmax_xent(logits: &[f64], labels: &[usize], classes: usize) -> Result<(f64, Vec<f64>)> {
    let batch = labels.len();
    if batch == 0 {
        return input("empty batch");
    }
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (n, &y) in labels.iter().enumerate() {
        if y >= classes {
            return input(format!("label {y} out of range for {classes} classes"));
        }
        let row = &logits[n * classes..(n + 1) * classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[y];
        for c in 0..classes {
            let p = (row[c] - lse).exp();
            grad[n * classes + c] = (p - if c == y { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((loss / batch as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr_w: f64,
    pub lr_alpha_w: f64,
    pub lr_alpha_x: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub alpha_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr_w: 0.05,
            lr_alpha_w: 0.01,
            lr_alpha_x: 0.03,
            momentum: 0.9,
            weight_decay: 1e-4,
            alpha_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Velocity {
    w: Vec<f64>,
    b: Vec<f64>,
    alpha_w: f64,
    alpha_x: f64,
}

/// SGD with momentum: `v ← μ v + g + λ p`, `p ← p - η v`.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub cfg: SgdConfig,
    velocity: Vec<Velocity>,
}

impl SgdState {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.momentum) {
            return config(format!("momentum must be in [0, 1), got {}", cfg.momentum));
        }
        for (name, v) in [
            ("lr_w", cfg.lr_w),
            ("lr_alpha_w", cfg.lr_alpha_w),
            ("lr_alpha_x", cfg.lr_alpha_x),
            ("weight_decay", cfg.weight_decay),
            ("alpha_decay", cfg.alpha_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return config(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(SgdState { cfg, velocity: Vec::new() })
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &[LayerGrads]) {
        let c = self.cfg;
        if self.velocity.len() != model.layers.len() {
            self.velocity = model
                .layers
                .iter()
                .map(|l| Velocity { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()], ..Default::default() })
                .collect();
        }
        let quant_w = model.quantizer.is_some();
        let quant_x = model.spec.quant.is_some_and(|q| q.activations_quantized());
        for ((layer, g), v) in model.layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((p, gp), vp) in layer.w.iter_mut().zip(&g.w).zip(&mut v.w) {
                *vp = c.momentum * *vp + gp + c.weight_decay * *p;
                *p -= c.lr_w * *vp;
            }
            for ((p, gp), vp) in layer.b.iter_mut().zip(&g.b).zip(&mut v.b) {
                *vp = c.momentum * *vp + gp;
                *p -= c.lr_w * *vp;
            }
            if quant_w {
                v.alpha_w = c.momentum * v.alpha_w + g.alpha_w + c.alpha_decay * layer.alpha_w;
                layer.alpha_w -= c.lr_alpha_w * v.alpha_w;
            }
            if quant_x {
                v.alpha_x = c.momentum * v.alpha_x + g.alpha_x + c.alpha_decay * layer.alpha_x;
                layer.alpha_x -= c.lr_alpha_x * v.alpha_x;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 30, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub loss: f64,
    /// Accuracy on the training set after the epoch.
    pub accuracy: f64,
    pub alpha_w: Vec<f64>,
    pub alpha_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    /// Global minibatch step (0-based) at which training stopped.
    pub step: usize,
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub divergence: Option<Divergence>,
}

impl TrainLog {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

fn check_finite(model: &MlpModel, loss: f64) -> Option<String> {
    if !loss.is_finite() {
        return Some(format!("loss became {loss}"));
    }
    for (i, l) in model.layers.iter().enumerate() {
        if !(l.alpha_w.is_finite() && l.alpha_w > 0.0) || !(l.alpha_x.is_finite() && l.alpha_x > 0.0) {
            return Some(format!("layer {i} threshold left (0, inf): alpha_w={}, alpha_x={}", l.alpha_w, l.alpha_x));
        }
        if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
            return Some(format!("layer {i} parameters are no longer finite"));
        }
    }
    None
}

/// Runs minibatch SGD. Divergence (a non-finite loss or a threshold leaving
/// `(0, ∞)`) stops the run and is recorded in the log rather than returned
/// as an error.
pub fn train_epochs(model: &mut MlpModel, data: &Dataset, sgd: &mut SgdState, opts: &TrainOptions) -> Result<TrainLog> {
    if data.is_empty() {
        return input("empty training set");
    }
    if data.dim != model.spec.input_dim {
        return input(format!("data has {} features, model expects {}", data.dim, model.spec.input_dim));
    }
    if opts.batch_size == 0 {
        return config("batch size must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog { epochs: Vec::with_capacity(opts.epochs), divergence: None };
    let mut step = 0;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.batch_size) {
            let (x, y) = data.batch(chunk);
            let outcome = model.loss_and_grads(&x, &y);
            let (loss, grads) = match outcome {
                Ok(v) => v,
                Err(Error::Config(msg)) | Err(Error::Input(msg)) => {
                    log.divergence = Some(Divergence { step, epoch, reason: msg });
                    return Ok(log);
                }
                Err(e) => return Err(e),
            };
            if let Some(reason) = check_finite(model, loss) {
                log.divergence = Some(Divergence { step, epoch, reason });
                return Ok(log);
            }
            sgd.step(model, &grads);
            if let Some(reason) = check_finite(model, 0.0) {
                log.divergence = Some(Divergence { step, epoch, reason });
                return Ok(log);
            }
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        let eval = evaluate(model, data)?;
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_sum / batches as f64,
            accuracy: eval.accuracy,
            alpha_w: model.alphas_w(),
            alpha_x: model.alphas_x(),
        });
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and accuracy with the real-valued (f64) quantized forward.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<Evaluation> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(256) {
        let (x, y) = data.batch(chunk);
        let logits = model.forward(&x, y.len())?;
        loss += softmax_xent(&logits, &y, model.spec.classes)?.0 * y.len() as f64;
        correct += argmax_rows(&logits, model.spec.classes)
            .iter()
            .zip(&y)
            .filter(|(p, t)| p == t)
            .count();
    }
    Ok(Evaluation { loss: loss / data.len() as f64, accuracy: correct as f64 / data.len() as f64 })
}

/// A model with the architecture and quantization settings of `lo` and the
/// trained parameters (weights, biases, thresholds) of `hi`.
pub fn progressive_init(lo: &MlpModel, hi: &MlpModel) -> Result<MlpModel> {
    let (a, b) = (&lo.spec, &hi.spec);
    if (a.input_dim, a.hidden, a.classes) != (b.input_dim, b.hidden, b.classes) {
        return config(format!(
            "architecture mismatch: {}-{}-{} vs {}-{}-{}",
            a.input_dim, a.hidden, a.classes, b.input_dim, b.hidden, b.classes
        ));
    }
    MlpModel::from_layers(lo.spec, hi.layers.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftAddReport {
    pub samples: usize,
    pub accuracy: f64,
    pub real_accuracy: f64,
    /// Dot products whose accumulator differed from the wide-integer product.
    pub integer_mismatches: usize,
    pub max_logit_deviation: f64,
    pub macs: u64,
    pub shift_add_slots: u64,
    pub active_shift_adds: u64,
    pub predicted_macs: u64,
    pub predicted_shift_adds: u64,
}

/// Inference with every weight multiplication done by the shift-add
/// simulator, compared against the real-valued forward.
pub fn evaluate_shiftadd(model: &MlpModel, data: &Dataset) -> Result<ShiftAddReport> {
    let q = model
        .quantizer
        .as_ref()
        .ok_or_else(|| Error::Config("shift-add inference needs a quantized model".into()))?;
    let act_ls = q
        .activation_levels()
        .ok_or_else(|| Error::Config("shift-add inference needs quantized activations".into()))?
        .clone();
    if data.dim != model.spec.input_dim {
        return input(format!("data has {} features, model expects {}", data.dim, model.spec.input_dim));
    }
    let w_ls = q.weight_levels().clone();
    let m_w = w_ls.max_numerator().to_f64().unwrap_or(f64::NAN);
    let codes: Vec<FixedPointActivation> = (0..act_ls.len())
        .map(|i| FixedPointActivation::from_level(i, &act_ls))
        .collect::<Result<_>>()?;
    let m_x = act_ls.max_numerator().to_f64().unwrap_or(f64::NAN);

    let w_idx: Vec<Vec<u32>> = model
        .layers
        .iter()
        .map(|l| q.quantize_weights(&l.w, l.alpha_w).map(|(_, c)| c.indices().to_vec()))
        .collect::<Result<_>>()?;

    let classes = model.spec.classes;
    let mut report = ShiftAddReport {
        samples: data.len(),
        accuracy: 0.0,
        real_accuracy: 0.0,
        integer_mismatches: 0,
        max_logit_deviation: 0.0,
        macs: 0,
        shift_add_slots: 0,
        active_shift_adds: 0,
        predicted_macs: 0,
        predicted_shift_adds: 0,
    };
    let real_logits = {
        let idx: Vec<usize> = (0..data.len()).collect();
        let (x, _) = data.batch(&idx);
        model.forward(&x, data.len())?
    };
    let (mut correct, mut real_correct) = (0usize, 0usize);
    for n in 0..data.len() {
        let mut a = data.row(n).to_vec();
        for (li, layer) in model.layers.iter().enumerate() {
            let (_, ac) = q.quantize_activations(&a, layer.alpha_x)?;
            let acts: Vec<FixedPointActivation> = ac.indices().iter().map(|&i| codes[i as usize]).collect();
            let scale = model.layer_gain(li) * (layer.alpha_w / m_w) * (layer.alpha_x / m_x);
            let mut z = Vec::with_capacity(layer.out_dim);
            for o in 0..layer.out_dim {
                let row = &w_idx[li][o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = MacAccumulator::new(&w_ls);
                let mut oracle = BigInt::from(0);
                for (&wi, act) in row.iter().zip(&acts) {
                    apot_mac(wi as usize, &w_ls, act, &mut acc)?;
                    oracle += direct_product(wi as usize, &w_ls, act.raw);
                }
                if BigInt::from(acc.raw()) != oracle {
                    report.integer_mismatches += 1;
                }
                report.macs += acc.macs();
                report.shift_add_slots += acc.shift_add_slots();
                report.active_shift_adds += acc.active_shift_adds();
                z.push(acc.raw() as f64 * scale + layer.b[o]);
            }
            a = if li + 1 < model.layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        let real = &real_logits[n * classes..(n + 1) * classes];
        for (s, r) in a.iter().zip(real) {
            report.max_logit_deviation = report.max_logit_deviation.max((s - r).abs());
        }
        let y = data.labels[n];
        correct += usize::from(argmax_rows(&a, classes)[0] == y);
        real_correct += usize::from(argmax_rows(real, classes)[0] == y);
    }
    report.accuracy = correct as f64 / data.len() as f64;
    report.real_accuracy = real_correct as f64 / data.len() as f64;

    let cfg = q.config();
    let cost = CostModel { weight_bits: cfg.weight_bits, act_bits: cfg.activation_bits, scheme: cfg.scheme, edge_bits: None };
    let defs: Vec<LayerDef> = model
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerDef::dense(format!("fc{i}"), l.out_dim as u64, l.in_dim as u64, LayerRole::Mid))
        .collect();
    let per_sample = cost_report(&cost.shapes(&defs)?)?;
    report.predicted_macs = per_sample.total_macs * data.len() as u64;
    report.predicted_shift_adds = per_sample.shift_add_count * data.len() as u64;
    Ok(report)
}
