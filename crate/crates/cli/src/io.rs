//! JSON/JSONL persistence with atomic writes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, FORMAT_VERSION};
use crate::error::CliError;

/// Parses one value per non-blank line; errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row =
            serde_json::from_str(line).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    bytes
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row).expect("row serializes");
        bytes.push(b'\n');
    }
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the primary outputs of one command and writes them with a
/// `run.json` manifest (config hash, format version, per-file digests) and a
/// `meta.json` holding the only wall-clock data.
pub struct OutputSet {
    dir: PathBuf,
    command: &'static str,
    started: SystemTime,
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn new(dir: PathBuf, command: &'static str) -> Self {
        Self {
            dir,
            command,
            started: SystemTime::now(),
            files: BTreeMap::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.put(name, &json_bytes(value))
    }

    pub fn put_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        self.put(name, &jsonl_bytes(rows))
    }

    pub fn finish(self, config: &RunConfig) -> Result<(), CliError> {
        let manifest = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "config_hash": config.hash(),
            "config": config,
            "outputs": self.files,
        });
        write_atomic(&self.dir.join("run.json"), &json_bytes(&manifest))?;
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let finished = SystemTime::now();
        let meta = serde_json::json!({
            "started_unix": secs(self.started),
            "finished_unix": secs(finished),
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        write_atomic(&self.dir.join("meta.json"), &json_bytes(&meta))
    }
}
