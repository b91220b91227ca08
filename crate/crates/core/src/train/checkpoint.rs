//! Model checkpoints.
//!
//! A text header followed by the raw payload:
//!
//! ```text
//! APOT-CKPT v1
//! config {"input_dim":2,...}
//! tensor layer0.w 32x2 f32
//! tensor layer0.b 32 f32
//! tensor layer0.alpha 2 f32
//! ...
//! end
//! <little-endian f32 values of every tensor, in header order>
//! ```
//!
//! `layerN.alpha` holds `[α_W, α_X]`.

use std::fs;
use std::path::Path;

use super::{DenseLayer, MlpModel, ModelSpec};
use crate::error::{Error, Result};

const MAGIC_LINE: &str = "APOT-CKPT v1";

struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn entries(model: &MlpModel) -> Vec<Entry> {
    let mut out = Vec::new();
    for (i, l) in model.layers.iter().enumerate() {
        out.push(Entry { name: format!("layer{i}.w"), shape: vec![l.out_dim, l.in_dim], values: l.w.clone() });
        out.push(Entry { name: format!("layer{i}.b"), shape: vec![l.out_dim], values: l.b.clone() });
        out.push(Entry { name: format!("layer{i}.alpha"), shape: vec![2], values: vec![l.alpha_w, l.alpha_x] });
    }
    out
}

pub fn to_bytes(model: &MlpModel) -> Result<Vec<u8>> {
    let spec = serde_json::to_string(model.spec()).map_err(|e| Error::Format(e.to_string()))?;
    let mut header = format!("{MAGIC_LINE}\nconfig {spec}\n");
    let mut payload = Vec::new();
    for e in entries(model) {
        let shape: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("tensor {} {} f32\n", e.name, shape.join("x")));
        for v in e.values {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| format_err("truncated checkpoint header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| format_err("checkpoint header is not UTF-8"))
    };
    if next_line()? != MAGIC_LINE {
        return Err(format_err("not an APOT-CKPT v1 checkpoint"));
    }
    let spec_line = next_line()?;
    let spec_json = spec_line.strip_prefix("config ").ok_or_else(|| format_err("missing config line"))?;
    let spec: ModelSpec = serde_json::from_str(spec_json).map_err(|e| format_err(format!("config: {e}")))?;
    let mut tensors: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "tensor" || f[3] != "f32" {
            return Err(format_err(format!("bad tensor line `{line}`")));
        }
        let shape = f[2]
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| format_err(format!("bad shape `{}`", f[2]))))
            .collect::<Result<Vec<_>>>()?;
        tensors.push((f[1].to_string(), shape));
    }
    let payload = &bytes[pos..];
    let total: usize = tensors.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 4 {
        return Err(format_err(format!(
            "payload holds {} bytes, header declares {} values",
            payload.len(),
            total
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut take = |name: &str, expect: &[usize]| -> Result<Vec<f64>> {
        let (n, shape) = tensors
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| format_err(format!("missing tensor {name}")))?;
        if shape != expect {
            return Err(format_err(format!("tensor {n} has shape {shape:?}, expected {expect:?}")));
        }
        Ok(values.by_ref().take(shape.iter().product()).collect())
    };
    let dims = [(spec.hidden, spec.input_dim), (spec.classes, spec.hidden)];
    let mut layers = Vec::with_capacity(2);
    for (i, (o, inp)) in dims.into_iter().enumerate() {
        let w = take(&format!("layer{i}.w"), &[o, inp])?;
        let b = take(&format!("layer{i}.b"), &[o])?;
        let a = take(&format!("layer{i}.alpha"), &[2])?;
        layers.push(DenseLayer { out_dim: o, in_dim: inp, w, b, alpha_w: a[0], alpha_x: a[1] });
    }
    MlpModel::from_layers(spec, layers)
}

pub fn save(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MlpModel> {
    from_bytes(&fs::read(path)?)
}
