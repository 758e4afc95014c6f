//! JSON-lines helpers and artifact provenance sidecars.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Version stamped on every question, sample and result record.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Record {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version {
        path: String,
        line: usize,
        found: u32,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one record per line. Output is a pure function of `records`.
pub fn to_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    std::fs::write(path, to_jsonl(records)).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    parse_jsonl_reader(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl_reader<T: DeserializeOwned>(
    reader: impl BufRead,
    name: &str,
) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IoError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| IoError::Record {
                path: name.to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if let Some(v) = value.get("format_version").and_then(|v| v.as_u64()) {
            if v != FORMAT_VERSION as u64 {
                return Err(IoError::Version {
                    path: name.to_string(),
                    line: i + 1,
                    found: v as u32,
                });
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| IoError::Record {
            path: name.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON encoding of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}

/// Record written next to every output artifact. Timestamps live only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactProvenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    /// Input path → content hash.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Artifact content hash.
    pub output_hash: String,
    /// Stage-specific details (generation settings, replacement rounds, ...).
    #[serde(default)]
    pub details: serde_json::Value,
    pub created_at_unix: u64,
}

impl ArtifactProvenance {
    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".provenance.json");
        artifact.with_file_name(name)
    }

    pub fn write_for(&self, artifact: &Path) -> Result<(), IoError> {
        let path = Self::sidecar_path(artifact);
        let mut text = serde_json::to_vec_pretty(self).expect("provenance serializes");
        text.push(b'\n');
        std::fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn read_for(artifact: &Path) -> Result<Option<Self>, IoError> {
        let path = Self::sidecar_path(artifact);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&text)
            .map(Some)
            .map_err(|e| IoError::Record {
                path: path.display().to_string(),
                line: 1,
                reason: e.to_string(),
            })
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Appends one JSON line and flushes; used by single-writer checkpoints.
pub fn append_jsonl<T: Serialize>(file: &mut std::fs::File, record: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(record).map_err(std::io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()
}
