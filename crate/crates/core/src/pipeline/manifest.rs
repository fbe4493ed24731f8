//! Run manifest and stage cache keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::StageSeeds;
use crate::error::Result;
use crate::util::{file_sha256, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
    /// True when the stage was skipped because its key and outputs matched.
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: StageSeeds,
    /// Unix time at which the run started.
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

impl ExperimentManifest {
    pub fn load(dir: &Path) -> Option<Self> {
        let bytes = std::fs::read(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn sigma_mode(&self) -> Option<String> {
        self.config.pointer("/sigma/mode")?.as_str().map(str::to_string)
    }

    pub fn task(&self) -> Option<String> {
        self.config.get("task")?.as_str().map(str::to_string)
    }

    pub fn seed(&self) -> Option<u64> {
        self.config.get("seed")?.as_u64()
    }
}

/// `sha256(name ‖ 0 ‖ params JSON ‖ 0 ‖ input checksums in key order)`.
pub fn stage_key(name: &str, params: &serde_json::Value, inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0]);
    h.update(params.to_string().as_bytes());
    h.update([0]);
    for sum in inputs.values() {
        h.update(sum.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// True when every recorded output exists under `dir` with its recorded checksum.
pub fn outputs_intact(dir: &Path, record: &StageRecord) -> bool {
    record
        .outputs
        .iter()
        .all(|(name, sum)| file_sha256(&dir.join(name)).map(|s| &s == sum).unwrap_or(false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_part() {
        let p = serde_json::json!({"a": 1});
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), "abc".to_string());
        let k = stage_key("train", &p, &inputs);
        assert_eq!(k, stage_key("train", &p, &inputs));
        assert_ne!(k, stage_key("sample", &p, &inputs));
        assert_ne!(k, stage_key("train", &serde_json::json!({"a": 2}), &inputs));
        inputs.insert("x".to_string(), "abd".to_string());
        assert_ne!(k, stage_key("train", &p, &inputs));
    }

    #[test]
    fn intact_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("o.txt"), b"hello").unwrap();
        let mut rec = StageRecord {
            name: "s".into(),
            key: "k".into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seconds: 0.0,
            cached: false,
        };
        rec.outputs.insert("o.txt".into(), file_sha256(&dir.path().join("o.txt")).unwrap());
        assert!(outputs_intact(dir.path(), &rec));
        std::fs::write(dir.path().join("o.txt"), b"hellp").unwrap();
        assert!(!outputs_intact(dir.path(), &rec));
        std::fs::remove_file(dir.path().join("o.txt")).unwrap();
        assert!(!outputs_intact(dir.path(), &rec));
    }
}
