//! Content hashing and provenance sidecars.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Incremental SHA-256 over typed values with length prefixes.
pub struct Hasher(Sha256);

impl Default for Hasher {
    fn default() -> Self {
        Self::new()
    }
}

impl Hasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn strings(&mut self, items: &[String]) {
        self.0.update((items.len() as u64).to_le_bytes());
        for s in items {
            self.str(s);
        }
    }

    pub fn f64(&mut self, v: f64) {
        self.0.update(v.to_bits().to_le_bytes());
    }

    pub fn matrix(&mut self, m: &Array2<f64>) {
        let (r, c) = m.dim();
        self.0.update((r as u64).to_le_bytes());
        self.0.update((c as u64).to_le_bytes());
        for v in m.iter() {
            self.f64(*v);
        }
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(b: &[u8]) -> String {
    hex(&Sha256::digest(b))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&b))
}

/// Sidecar written next to every stage output.
///
/// `created_at` is the only field that differs between identical reruns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub stage: String,
    /// input name → sha256 of its content
    pub inputs: BTreeMap<String, String>,
    /// output file name → sha256 of its content
    pub outputs: BTreeMap<String, String>,
    pub created_at: u64,
}

impl Provenance {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            created_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn input(mut self, name: &str, hash: String) -> Self {
        self.inputs.insert(name.to_string(), hash);
        self
    }

    pub fn input_file(self, name: &str, path: &Path) -> Result<Self> {
        let h = sha256_file(path)?;
        Ok(self.input(name, h))
    }

    /// Records the hash of `path` and writes `<path>.prov.json` next to it.
    pub fn write_for(mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.outputs.insert(name, sha256_file(path)?);
        let side = sidecar_path(path);
        let body = serde_json::to_string_pretty(&self).expect("provenance serializes");
        fs::write(&side, body + "\n").map_err(|e| Error::io(&side, e))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".prov.json");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hasher_separates_concatenations() {
        let mut a = Hasher::new();
        a.str("ab");
        a.str("c");
        let mut b = Hasher::new();
        b.str("a");
        b.str("bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_bytes(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
