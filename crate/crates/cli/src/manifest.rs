//! The run manifest: which stages ran, with which inputs, producing which
//! artifacts. Paths are relative to the output directory. Wall-clock times
//! live in a separate `timings.json` so that the manifest itself is
//! reproducible byte for byte.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "lmface.manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Hash of the stage name, its settings, its seed and its input
    /// checksums.
    pub key: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    /// Declared but not yet checksummed.
    #[serde(default)]
    pub provisional: bool,
}

impl Artifact {
    pub fn provisional(path: &str) -> Self {
        Self {
            path: path.to_string(),
            sha256: None,
            provisional: true,
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("lmface".to_string(), lmface::VERSION.to_string()),
        (
            "lmface-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        ("manifest".to_string(), MANIFEST_SCHEMA.to_string()),
    ])
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            config_hash,
            versions: versions(),
            seed,
            stages: Vec::new(),
        }
    }

    /// Reads `manifest.json` from `dir`. A missing, unreadable or foreign
    /// manifest yields `None`: nothing is skipped.
    pub fn read(dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        let m: Self = serde_json::from_str(&text).ok()?;
        (m.schema == MANIFEST_SCHEMA).then_some(m)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Replaces the record of the same name in place, or appends.
    pub fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|s| s.name == record.name) {
            Some(slot) => *slot = record,
            None => self.stages.push(record),
        }
    }
}

impl StageRecord {
    /// Complete, with the same key, and every output still on disk with
    /// its recorded checksum.
    pub fn is_current(&self, key: &str, dir: &Path) -> bool {
        self.status == StageStatus::Complete
            && self.key == key
            && self.outputs.iter().all(|a| {
                !a.provisional
                    && a.sha256
                        .as_deref()
                        .is_some_and(|h| sha256_file(&dir.join(&a.path)).is_ok_and(|got| got == h))
            })
    }
}

/// Seconds per stage from the most recent invocation; `null` for stages
/// that were skipped.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: BTreeMap<String, Option<f64>>,
}

impl Timings {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path: PathBuf = dir.join(TIMINGS_FILE);
        let text = serde_json::to_string_pretty(self).expect("timings serialize") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
