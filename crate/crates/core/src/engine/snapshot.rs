use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EngineError, Result, SessionCore};
use crate::dataset::Dataset;

pub const SNAPSHOT_FORMAT: &str = "egal-session";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Identifies the pool and exemplars a snapshot was taken against. Hidden
/// labels and display text are not part of the digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub examples: usize,
    pub dim: usize,
    pub classes: usize,
    pub sha256: String,
}

impl DatasetDigest {
    pub fn of(dataset: &Dataset) -> Self {
        let mut h = Sha256::new();
        for r in &dataset.examples {
            h.update(r.id.as_bytes());
            h.update([0u8]);
            for x in &r.vec {
                h.update(x.to_le_bytes());
            }
        }
        for e in &dataset.exemplars {
            h.update(e.class_id.as_bytes());
            h.update([1u8]);
            for x in &e.vec {
                h.update(x.to_le_bytes());
            }
        }
        Self {
            examples: dataset.examples.len(),
            dim: dataset.d,
            classes: dataset.class_ids.len(),
            sha256: hex(&h.finalize()),
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to resume a session, given the same dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub format: String,
    pub version: u32,
    pub dataset: DatasetDigest,
    core: SessionCore,
}

impl SessionSnapshot {
    pub(crate) fn new(dataset: &Dataset, core: SessionCore) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            dataset: DatasetDigest::of(dataset),
            core,
        }
    }

    pub(crate) fn into_core(self, dataset: &Dataset) -> Result<SessionCore> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION {
            return Err(EngineError::SnapshotMismatch(format!(
                "unsupported snapshot {} v{}",
                self.format, self.version
            )));
        }
        let digest = DatasetDigest::of(dataset);
        if digest != self.dataset {
            return Err(EngineError::SnapshotMismatch(format!(
                "dataset digest {} differs from {}",
                digest.sha256, self.dataset.sha256
            )));
        }
        Ok(self.core)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
