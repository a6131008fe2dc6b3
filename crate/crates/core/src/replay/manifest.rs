//! Locked JSON manifests: canonical serialization plus SHA-256 digest.
//!
//! A manifest file is the canonical JSON of `{"digest": .., "locked": ..}`
//! where `locked` holds the content and the optional timestamp, and the digest
//! covers the canonical bytes of `locked`. Canonical means compact, keys sorted,
//! shortest round-trip numbers. Verification recomputes both, so any byte
//! change in the file is detected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LockManifest {
    /// Canonical serialization of the locked content.
    pub serialization: String,
    pub digest: String,
    pub timestamp: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Compact JSON with sorted object keys.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // Going through `Value` sorts keys: its map type is ordered by key.
    let v = serde_json::to_value(value).map_err(|e| CoreError::validation(format!("serialize: {e}")))?;
    serde_json::to_string(&v).map_err(|e| CoreError::validation(format!("serialize: {e}")))
}

pub fn lock_manifest<T: Serialize + ?Sized>(content: &T, timestamp: Option<String>) -> Result<LockManifest> {
    let content = serde_json::to_value(content).map_err(|e| CoreError::validation(format!("serialize: {e}")))?;
    let locked = json!({ "content": content, "timestamp": timestamp });
    let serialization = canonical_json(&locked)?;
    Ok(LockManifest {
        digest: sha256_hex(serialization.as_bytes()),
        serialization,
        timestamp,
    })
}

pub fn verify_manifest(manifest: &LockManifest) -> bool {
    sha256_hex(manifest.serialization.as_bytes()) == manifest.digest
        && canonical_bytes_of(&manifest.serialization).as_deref() == Some(manifest.serialization.as_str())
}

fn canonical_bytes_of(text: &str) -> Option<String> {
    let v: Value = serde_json::from_str(text).ok()?;
    canonical_json(&v).ok()
}

impl LockManifest {
    /// Bytes of the manifest file, newline-terminated.
    pub fn file_contents(&self) -> Result<String> {
        let locked: Value = serde_json::from_str(&self.serialization)
            .map_err(|e| CoreError::Internal(format!("manifest serialization: {e}")))?;
        Ok(canonical_json(&json!({ "digest": self.digest, "locked": locked }))? + "\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| CoreError::validation(format!("manifest is not JSON: {e}")))?;
        let digest = v
            .get("digest")
            .and_then(Value::as_str)
            .ok_or_else(|| CoreError::validation("manifest has no digest"))?
            .to_owned();
        let locked = v.get("locked").ok_or_else(|| CoreError::validation("manifest has no locked content"))?;
        let timestamp = locked.get("timestamp").and_then(Value::as_str).map(str::to_owned);
        Ok(Self {
            serialization: canonical_json(locked)?,
            digest,
            timestamp,
        })
    }

    pub fn content(&self) -> Option<Value> {
        let v: Value = serde_json::from_str(&self.serialization).ok()?;
        v.get("content").cloned()
    }
}

pub fn digest_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".sha256");
    PathBuf::from(name)
}

/// Writes the manifest and a sibling `<file>.sha256` holding the digest.
pub fn write_manifest(manifest: &LockManifest, path: &Path) -> std::io::Result<()> {
    let body = manifest
        .file_contents()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    fs::write(path, body)?;
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(digest_sidecar(path), format!("{}  {}\n", manifest.digest, file_name))
}

/// Outcome of checking a manifest file on disk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileVerification {
    pub valid: bool,
    pub digest_matches: bool,
    pub canonical: bool,
    /// `None` when no sidecar exists.
    pub sidecar_matches: Option<bool>,
    pub digest: Option<String>,
}

pub fn verify_manifest_file(path: &Path) -> std::io::Result<FileVerification> {
    let bytes = fs::read(path)?;
    let sidecar = digest_sidecar(path);
    let sidecar_text = match fs::read_to_string(&sidecar) {
        Ok(t) => Some(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e),
    };
    let parsed = std::str::from_utf8(&bytes).ok().and_then(|t| LockManifest::parse(t).ok().map(|m| (t, m)));
    let Some((text, manifest)) = parsed else {
        return Ok(FileVerification {
            valid: false,
            digest_matches: false,
            canonical: false,
            sidecar_matches: sidecar_text.map(|_| false),
            digest: None,
        });
    };
    let digest_matches = verify_manifest(&manifest);
    let canonical = manifest.file_contents().map(|c| c == text).unwrap_or(false);
    let sidecar_matches = sidecar_text.map(|t| t.split_whitespace().next() == Some(manifest.digest.as_str()));
    Ok(FileVerification {
        valid: digest_matches && canonical && sidecar_matches.unwrap_or(true),
        digest_matches,
        canonical,
        sidecar_matches,
        digest: Some(manifest.digest),
    })
}
