//! Raw `tensor.f32` files: a little-endian `u32` magic `0x41504F54`, a `u32`
//! element count, then the elements as little-endian `f32`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: u32 = 0x4150_4F54;
const HEADER_BYTES: usize = 8;

pub fn encode(values: &[f32]) -> Result<Vec<u8>> {
    let count = u32::try_from(values.len())
        .map_err(|_| Error::Input(format!("{} elements exceed the u32 count field", values.len())))?;
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * values.len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Format(format!("tensor file is {} bytes, shorter than its header", bytes.len())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if word(0) != MAGIC {
        return Err(Error::Format(format!("bad magic {:#010x}, expected {MAGIC:#010x}", word(0))));
    }
    let count = word(4) as usize;
    let body = &bytes[HEADER_BYTES..];
    if body.len() != count * 4 {
        return Err(Error::Format(format!(
            "header declares {count} elements but the payload holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub fn read_tensor(path: &Path) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_tensor(path: &Path, values: &[f32]) -> Result<()> {
    let bytes = encode(values)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}
