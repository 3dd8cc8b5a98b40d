use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::Failure;

/// Everything needed to reproduce a command's outputs. Two runs with equal
/// manifests write byte-identical files.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub seed: u64,
    /// SHA-256 over the resolved configuration and every input file.
    pub input_hash: String,
    pub outputs: Vec<String>,
    pub config: &'a Resolved,
}

pub fn content_hash(command: &str, config: &Resolved, inputs: &[(String, Vec<u8>)]) -> Result<String, Failure> {
    let snapshot = toml::to_string(config).map_err(|e| Failure::Config(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(b"covtrace-run\n");
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(snapshot.as_bytes());
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write(out: &Path, manifest: &RunManifest<'_>) -> Result<(), Failure> {
    let path = out.join("manifest.toml");
    let text = toml::to_string(manifest).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Failure::io(&path, e))
}
