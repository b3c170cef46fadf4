//! Run manifests and content hashing.
//!
//! Every stage writes a manifest recording the hashes of its inputs and
//! outputs, so any report file can be traced back to the exact data and
//! configuration that produced it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 of a file's contents, hex-encoded.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of an in-memory buffer, hex-encoded.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable 64-bit hash over byte parts, for seed derivation and deterministic
/// per-combination decisions. Built on SHA-256 so the value never changes
/// across compiler or library versions.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seconds since the epoch, honoring `SOURCE_DATE_EPOCH` so reproducible
/// runs can pin their manifests.
pub fn timestamp() -> u64 {
    if let Ok(raw) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(fixed) = raw.trim().parse() {
            return fixed;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Record of one pipeline stage execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub timestamp: u64,
    pub config_hash: String,
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output path → content hash.
    pub outputs: BTreeMap<String, String>,
    /// Seeds and other numeric settings that shaped the stage.
    pub params: BTreeMap<String, String>,
    /// Row counts and similar totals.
    pub counts: BTreeMap<String, u64>,
}

impl StageManifest {
    pub fn new(stage: impl Into<String>, config_hash: impl Into<String>) -> Self {
        StageManifest {
            stage: stage.into(),
            timestamp: timestamp(),
            config_hash: config_hash.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            params: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn record_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let hash = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.insert(key.to_string(), value.to_string());
    }

    pub fn count(&mut self, key: &str, value: u64) {
        self.counts.insert(key.to_string(), value);
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path, 0, e.to_string()))?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }
}
