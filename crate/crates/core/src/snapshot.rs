//! Versioned, canonical JSON persistence of a built network.
//!
//! Keys are written in sorted order and every float with 17 significant
//! digits, so a save/load cycle reproduces the snapshot exactly and two saves
//! of equal snapshots are byte-identical.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::fsn::{AcquaintanceWeights, Edge, Fsn};
use crate::model::FDTag;

pub const SNAPSHOT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub theta: f64,
    pub lexicon: String,
    pub seed: u64,
    pub weights: AcquaintanceWeights,
    pub time_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u64,
    pub config: BuildConfig,
    pub tags: Vec<FDTag>,
    pub edges: Vec<Edge>,
    pub embedding: Option<Embedding>,
}

impl Snapshot {
    pub fn new(fsn: &Fsn, config: BuildConfig) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            config,
            tags: fsn.nodes().to_vec(),
            edges: fsn.edges().to_vec(),
            embedding: None,
        }
    }

    /// Attaches coordinates and copies them into each tag's event.
    pub fn with_embedding(mut self, embedding: Embedding) -> Result<Self, SnapshotError> {
        if embedding.len() != self.tags.len() {
            return Err(SnapshotError::CorruptSnapshot(format!(
                "embedding has {} points for {} tags",
                embedding.len(),
                self.tags.len()
            )));
        }
        self.tags = self
            .tags
            .iter()
            .zip(embedding.coords())
            .map(|(t, p)| t.with_position(*p))
            .collect::<Result<_, _>>()
            .map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        self.embedding = Some(embedding);
        Ok(self)
    }

    pub fn fsn(&self) -> Result<Fsn, SnapshotError> {
        Fsn::from_parts(self.tags.clone(), self.edges.clone(), self.config.theta)
            .map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))
    }

    pub fn to_canonical_json(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("snapshots contain only finite numbers");
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFloats);
        value.serialize(&mut ser).expect("writing to a vec cannot fail");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| SnapshotError::CorruptSnapshot("missing or invalid version".into()))?;
        if found != SNAPSHOT_VERSION {
            return Err(SnapshotError::VersionMismatch { found, expected: SNAPSHOT_VERSION });
        }
        let mut snap: Snapshot =
            serde_json::from_value(value).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        snap.fsn()?;
        if let Some(emb) = snap.embedding.take() {
            let emb = emb.reindex().map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
            snap = snap.with_embedding(emb)?;
        }
        Ok(snap)
    }
}

pub fn save_snapshot(snapshot: &Snapshot, path: &Path) -> Result<(), SnapshotError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&snapshot.to_canonical_json())?;
    file.sync_all()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    Snapshot::from_json(&std::fs::read(path)?)
}

/// Compact JSON with floats as `d.dddddddddddddddde±x`.
struct CanonicalFloats;

impl serde_json::ser::Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}
