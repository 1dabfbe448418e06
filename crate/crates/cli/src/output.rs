//! CSV/JSON rendering and the run manifest.
//!
//! Every float is written in shortest round-trip form (`ryu`), so identical
//! results give identical bytes.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Minimal CSV builder; no field ever needs quoting.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text, columns: header.len() }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "row width");
        debug_assert!(fields.iter().all(|f| !f.contains([',', '\n', '"'])));
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn json_bytes<S: Serialize>(value: &S) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// SHA-256 of the canonical JSON form of `config`. `serde_json` maps are
/// ordered by key, so the digest does not depend on field order in the file.
pub fn config_digest<S: Serialize>(config: &S) -> String {
    let value: Value = serde_json::to_value(config).expect("serializable config");
    let canonical = serde_json::to_string(&value).expect("serializable value");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// One file produced by a command.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct OutputEntry<'a> {
    file: &'a str,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    config_digest: &'a str,
    master_seed: Option<u64>,
    wall_time_seconds: f64,
    summary: &'a Value,
    outputs: Vec<OutputEntry<'a>>,
}

/// Writes the artifacts to `dir` followed by `<command>.manifest.json`
/// referencing all of them. Returns the manifest path.
pub fn write_all(
    dir: &Path,
    command: &str,
    digest: &str,
    master_seed: Option<u64>,
    wall_time_seconds: f64,
    summary: &Value,
    artifacts: &[Artifact],
) -> CliResult<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::io(&path, e))?;
    }
    let manifest = Manifest {
        tool_version: TOOL_VERSION,
        command,
        config_digest: digest,
        master_seed,
        wall_time_seconds,
        summary,
        outputs: artifacts.iter().map(|a| OutputEntry { file: &a.name, sha256: hex::encode(Sha256::digest(&a.bytes)) }).collect(),
    };
    let path = dir.join(format!("{}.manifest.json", command.replace('-', "_")));
    std::fs::write(&path, json_bytes(&manifest)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
