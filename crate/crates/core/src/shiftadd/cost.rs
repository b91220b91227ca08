//! FixOPS and model-size cost model.
//!
//! One FixOP is one 8-bit × 8-bit fixed-point operation, i.e. 64 binary
//! operations. Per multiply-accumulate with `m`-bit activations:
//!
//! - APoT weights with `n` additive terms: `n·m/64` (an odd-bit set has `n+1`
//!   terms, the last one single-bit, and counts as one more shift-add);
//! - uniform weights with `l` total bits: `l·m/64`;
//! - PoT weights: `m/64`;
//! - 32-bit (full precision) layers count one FLOP per MAC.
//!
//! Layers tagged `first` or `last` run at 8 bits (1 FixOP per MAC) unless the
//! model disables that convention. MB figures use 10^6 bytes.
//!
//! Layer tables have one layer per line:
//! `name C_out C_in K stride padding H_in W_in [first|last|mid]`. `#` starts a
//! comment. Shortcut projections are listed as ordinary 1×1 layers; fully
//! connected layers use `K = H_in = W_in = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::levels::Scheme;

/// Bit width treated as full precision.
pub const FULL_PRECISION_BITS: u32 = 32;

/// Bytes of the stored clipping threshold per quantized layer.
pub const ALPHA_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerRole {
    First,
    Mid,
    Last,
}

impl FromStr for LayerRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(LayerRole::First),
            "mid" => Ok(LayerRole::Mid),
            "last" => Ok(LayerRole::Last),
            other => input(format!("unknown layer role `{other}` (expected first, last or mid)")),
        }
    }
}

impl fmt::Display for LayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerRole::First => "first",
            LayerRole::Mid => "mid",
            LayerRole::Last => "last",
        })
    }
}

/// Geometry of one layer as read from a layer table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDef {
    pub name: String,
    pub c_out: u64,
    pub c_in: u64,
    pub kernel: u64,
    pub stride: u64,
    pub padding: u64,
    pub h_in: u64,
    pub w_in: u64,
    pub role: LayerRole,
}

impl LayerDef {
    /// A fully connected layer.
    pub fn dense(name: impl Into<String>, out: u64, inp: u64, role: LayerRole) -> Self {
        LayerDef {
            name: name.into(),
            c_out: out,
            c_in: inp,
            kernel: 1,
            stride: 1,
            padding: 0,
            h_in: 1,
            w_in: 1,
            role,
        }
    }

    fn out_dim(&self, d: u64) -> Result<u64> {
        let span = d + 2 * self.padding;
        if span < self.kernel {
            return input(format!("layer {}: kernel {} exceeds padded input {span}", self.name, self.kernel));
        }
        Ok((span - self.kernel) / self.stride + 1)
    }

    pub fn h_out(&self) -> Result<u64> {
        self.out_dim(self.h_in)
    }

    pub fn w_out(&self) -> Result<u64> {
        self.out_dim(self.w_in)
    }

    pub fn weight_count(&self) -> u64 {
        self.c_out * self.c_in * self.kernel * self.kernel
    }
}

/// Parses a layer table.
pub fn parse_layer_table(text: &str) -> Result<Vec<LayerDef>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 && f.len() != 9 {
            return input(format!("line {}: expected 8 or 9 fields, got {}", lineno + 1, f.len()));
        }
        let num = |i: usize, what: &str| -> Result<u64> {
            f[i].parse::<u64>()
                .map_err(|_| Error::Input(format!("line {}: bad {what} `{}`", lineno + 1, f[i])))
        };
        let def = LayerDef {
            name: f[0].to_string(),
            c_out: num(1, "C_out")?,
            c_in: num(2, "C_in")?,
            kernel: num(3, "K")?,
            stride: num(4, "stride")?,
            padding: num(5, "padding")?,
            h_in: num(6, "H_in")?,
            w_in: num(7, "W_in")?,
            role: match f.get(8) {
                Some(r) => r.parse()?,
                None => LayerRole::Mid,
            },
        };
        if [def.c_out, def.c_in, def.kernel, def.stride, def.h_in, def.w_in].contains(&0) {
            return input(format!("line {}: dimensions must be positive", lineno + 1));
        }
        def.h_out()?;
        def.w_out()?;
        out.push(def);
    }
    if out.is_empty() {
        return input("layer table has no layers");
    }
    Ok(out)
}

/// A layer with its geometry resolved and bit widths assigned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerShape {
    pub name: String,
    pub c_out: u64,
    pub c_in: u64,
    pub kernel: u64,
    pub h_out: u64,
    pub w_out: u64,
    pub weight_bits: u32,
    pub act_bits: u32,
    pub scheme: Scheme,
}

impl LayerShape {
    pub fn macs(&self) -> u64 {
        self.c_out * self.c_in * self.kernel * self.kernel * self.h_out * self.w_out
    }

    pub fn weight_count(&self) -> u64 {
        self.c_out * self.c_in * self.kernel * self.kernel
    }

    pub fn is_full_precision(&self) -> bool {
        self.weight_bits >= FULL_PRECISION_BITS && self.act_bits >= FULL_PRECISION_BITS
    }
}

/// Bit assignment for a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub weight_bits: u32,
    pub act_bits: u32,
    pub scheme: Scheme,
    /// Bit width of layers tagged first/last; `None` treats them like the rest.
    pub edge_bits: Option<u32>,
}

impl CostModel {
    pub fn new(weight_bits: u32, act_bits: u32, scheme: Scheme) -> Self {
        CostModel { weight_bits, act_bits, scheme, edge_bits: Some(8) }
    }

    pub fn shape(&self, def: &LayerDef) -> Result<LayerShape> {
        let full = self.weight_bits >= FULL_PRECISION_BITS;
        let (weight_bits, act_bits, scheme) = match (def.role, self.edge_bits) {
            (LayerRole::First | LayerRole::Last, Some(b)) if !full => (b, b, Scheme::Uniform),
            _ => (self.weight_bits, self.act_bits, self.scheme),
        };
        Ok(LayerShape {
            name: def.name.clone(),
            c_out: def.c_out,
            c_in: def.c_in,
            kernel: def.kernel,
            h_out: def.h_out()?,
            w_out: def.w_out()?,
            weight_bits,
            act_bits,
            scheme,
        })
    }

    pub fn shapes(&self, defs: &[LayerDef]) -> Result<Vec<LayerShape>> {
        defs.iter().map(|d| self.shape(d)).collect()
    }
}

/// Shift-add slots per MAC for signed `weight_bits`-bit weights: the number of
/// additive terms of the level set (`n`, or `n+1` for odd-bit APoT).
pub fn shift_adds_per_mac(scheme: Scheme, weight_bits: u32) -> Result<u64> {
    if weight_bits < 2 {
        return config(format!("weight bit width {weight_bits} must be at least 2"));
    }
    if weight_bits >= FULL_PRECISION_BITS {
        return Ok(0);
    }
    let m = weight_bits - 1;
    if weight_bits == 2 {
        // Ternary for every scheme.
        return Ok(1);
    }
    match scheme {
        Scheme::Uniform => Ok(u64::from(m)),
        Scheme::PoT => Ok(1),
        Scheme::APoT { base_bits: k } => {
            if k == 0 {
                config("base bit width k must be positive")
            } else if m % k == 0 {
                Ok(u64::from(m / k))
            } else if k == 2 {
                Ok(u64::from((m - 1) / 2 + 1))
            } else {
                config(format!(
                    "unsupported APoT configuration: {m} magnitude bits with k={k}"
                ))
            }
        }
    }
}

/// Binary operations per MAC divided by 64.
pub fn fixops_per_mac(scheme: Scheme, weight_bits: u32, act_bits: u32) -> Result<f64> {
    if act_bits == 0 || weight_bits < 2 {
        return config(format!("unsupported bit widths {weight_bits}/{act_bits}"));
    }
    if weight_bits >= FULL_PRECISION_BITS && act_bits >= FULL_PRECISION_BITS {
        return Ok(1.0);
    }
    if weight_bits >= FULL_PRECISION_BITS || act_bits >= FULL_PRECISION_BITS {
        return config("mixed full-precision and fixed-point layers are not supported");
    }
    let m = f64::from(act_bits);
    let ops = match scheme {
        Scheme::Uniform => f64::from(weight_bits),
        Scheme::PoT | Scheme::APoT { .. } => shift_adds_per_mac(scheme, weight_bits)? as f64,
    };
    Ok(ops * m / 64.0)
}

/// FixOPS of one layer (FLOPs for full-precision layers).
pub fn fixops_for_layer(shape: &LayerShape) -> Result<f64> {
    Ok(shape.macs() as f64 * fixops_per_mac(shape.scheme, shape.weight_bits, shape.act_bits)?)
}

/// Bytes to store one layer: packed weights plus the threshold.
pub fn layer_bytes(shape: &LayerShape) -> Result<u64> {
    if shape.weight_bits < 2 {
        return config(format!("weight bit width {} must be at least 2", shape.weight_bits));
    }
    let bits = shape.weight_count() * u64::from(shape.weight_bits);
    let alpha = if shape.weight_bits >= FULL_PRECISION_BITS { 0 } else { ALPHA_BYTES };
    Ok(bits.div_ceil(8) + alpha)
}

pub fn model_size(shapes: &[LayerShape]) -> Result<u64> {
    shapes.iter().map(layer_bytes).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
    pub weight_bits: u32,
    pub act_bits: u32,
    pub fixops: f64,
    pub bytes: u64,
    pub shift_adds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_fixops: f64,
    pub model_size_bytes: u64,
    pub shift_add_count: u64,
}

impl CostReport {
    pub fn model_size_mb(&self) -> f64 {
        self.model_size_bytes as f64 / 1e6
    }
}

pub fn cost_report(shapes: &[LayerShape]) -> Result<CostReport> {
    let mut layers = Vec::with_capacity(shapes.len());
    for s in shapes {
        let macs = s.macs();
        layers.push(LayerCost {
            name: s.name.clone(),
            macs,
            weight_bits: s.weight_bits,
            act_bits: s.act_bits,
            fixops: fixops_for_layer(s)?,
            bytes: layer_bytes(s)?,
            shift_adds: macs * shift_adds_per_mac(s.scheme, s.weight_bits)?,
        });
    }
    Ok(CostReport {
        total_macs: layers.iter().map(|l| l.macs).sum(),
        total_fixops: layers.iter().map(|l| l.fixops).sum(),
        model_size_bytes: layers.iter().map(|l| l.bytes).sum(),
        shift_add_count: layers.iter().map(|l| l.shift_adds).sum(),
        layers,
    })
}

/// Layer tables shipped with the crate.
pub fn builtin_table(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".layers") {
        "resnet18" => Some(include_str!("../../data/resnet18.layers")),
        "resnet34" => Some(include_str!("../../data/resnet34.layers")),
        "resnet50" => Some(include_str!("../../data/resnet50.layers")),
        _ => None,
    }
}
