//! Config loading, hashing and run manifests.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const BUILD_ID: &str = env!("RPL_BUILD_ID");
pub const MANIFEST_VERSION: u64 = 1;

/// Reads a config file. A manifest written by an earlier run is accepted
/// too, in which case its resolved config is used, so a run can be repeated
/// from its own manifest.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if v.get("manifest_version").is_some() {
        let cmd = v.get("command").and_then(Value::as_str).unwrap_or("");
        if cmd != command {
            return Err(CliError::Config(format!("manifest is for `{cmd}`, not `{command}`")));
        }
        v = v["config"].take();
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// SHA-256 of the canonical JSON form (object keys sorted).
pub fn hash<T: Serialize>(cfg: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(hex(&Sha256::digest(serde_json::to_vec(&v).expect("value serializes"))))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the artifacts of one run and writes `manifest.json` last.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    config: Value,
    config_hash: String,
    seeds: Value,
    outputs: Vec<Value>,
    summary: Value,
}

impl Run {
    pub fn new<T: Serialize>(dir: &Path, command: &str, cfg: &T) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?,
            config_hash: hash(cfg)?,
            seeds: Value::Null,
            outputs: Vec::new(),
            summary: Value::Null,
        })
    }

    /// Writes `name` through `f` into the run directory and records it.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), rpl_core::io::IoError>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
        buf.push(b'\n');
        self.write_bytes(name, buf)
    }

    fn write_bytes(&mut self, name: &str, buf: Vec<u8>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(json!({ "file": name, "bytes": buf.len(), "sha256": hex(&Sha256::digest(&buf)) }));
        Ok(())
    }

    /// Per-replica seeds, as `[{"n":..,"replica":..,"seed":..}]` or similar.
    pub fn seeds(&mut self, seeds: Value) {
        self.seeds = seeds;
    }

    pub fn summary(&mut self, summary: Value) {
        self.summary = summary;
    }

    pub fn finish(self) -> Result<(), CliError> {
        let m = json!({
            "manifest_version": MANIFEST_VERSION,
            "build_id": BUILD_ID,
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "outputs": self.outputs,
            "summary": self.summary,
        });
        let mut buf = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        buf.push(b'\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
