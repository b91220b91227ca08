use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use apot::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::args::{Cli, Format};

/// Everything a command produces. Nothing touches the filesystem until the
/// command has finished without error.
#[derive(Debug, Default)]
pub struct Emit {
    /// Files to write, primary output first.
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub stdout: Vec<u8>,
    pub inputs: Vec<PathBuf>,
    pub summary: Option<Value>,
}

impl Emit {
    /// Sends `bytes` to `out`, or to stdout when `out` is `None`.
    pub fn primary(&mut self, out: Option<&Path>, bytes: Vec<u8>) {
        match out {
            Some(p) => self.files.insert(0, (p.to_path_buf(), bytes)),
            None => self.stdout = bytes,
        }
    }

    pub fn file(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn csv_bytes<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Result<Vec<u8>, Error> {
    let mut w = csv_writer();
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>, Error> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// A flat report as two-column `key,value` CSV or as JSON.
pub fn report_bytes(format: Format, v: &impl Serialize) -> Result<Vec<u8>, Error> {
    match format {
        Format::Json => json_bytes(v),
        Format::Csv => {
            let value = serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))?;
            let Value::Object(map) = value else {
                return Err(Error::Format("report is not a JSON object".into()));
            };
            let rows = map.into_iter().map(|(k, v)| {
                let v = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                vec![k, v]
            });
            csv_bytes(&["key", "value"], rows)
        }
    }
}

/// Refuses outputs that would overwrite one of the inputs.
pub fn check_no_clobber(emit: &Emit) -> Result<(), Error> {
    for (out, _) in &emit.files {
        for inp in &emit.inputs {
            let same = match (fs::canonicalize(out), fs::canonicalize(inp)) {
                (Ok(a), Ok(b)) => a == b,
                _ => out == inp,
            };
            if same {
                return Err(Error::Usage(format!("output {} would overwrite input", out.display())));
            }
        }
    }
    Ok(())
}

fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn digest_entry(path: &str, bytes: &[u8]) -> Value {
    json!({ "path": path, "bytes": bytes.len(), "sha256": sha256_hex(bytes) })
}

/// Writes the outputs and the run manifest.
pub fn commit(cli: &Cli, emit: &Emit) -> Result<(), Error> {
    let mut inputs = Vec::new();
    for p in &emit.inputs {
        let bytes = fs::read(p)?;
        inputs.push(digest_entry(&p.display().to_string(), &bytes));
    }
    let mut outputs: Vec<Value> = emit
        .files
        .iter()
        .map(|(p, b)| digest_entry(&p.display().to_string(), b))
        .collect();
    if emit.files.is_empty() || !emit.stdout.is_empty() {
        outputs.push(digest_entry("-", &emit.stdout));
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command_name(cli),
        "seed": cli.seed,
        "config": cli,
        "inputs": inputs,
        "outputs": outputs,
        "summary": emit.summary,
    });
    let manifest = json_bytes(&manifest)?;

    for (p, b) in &emit.files {
        fs::write(p, b)?;
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(&emit.stdout)?;
    stdout.flush()?;
    match emit.files.first() {
        Some((p, _)) => fs::write(manifest_path(p), manifest)?,
        None => std::io::stderr().write_all(&manifest)?,
    }
    Ok(())
}

pub fn command_name(cli: &Cli) -> &'static str {
    use crate::args::Command::*;
    match cli.command {
        Levels(_) => "levels",
        Quantize(_) => "quantize",
        Gradcheck(_) => "gradcheck",
        Analyze(_) => "analyze",
        Cost(_) => "cost",
        Train(_) => "train",
        Simulate(_) => "simulate",
        Rerun(_) => "rerun",
    }
}
