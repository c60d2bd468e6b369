use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::train::{EpochMetrics, TrainConfig};
use crate::error::{Error, Result};
use crate::skeleton::DirectedSkeletonGraph;

pub const CHECKPOINT_VERSION: &str = "v1";

/// Trained parameters plus everything needed to reproduce and audit them.
/// Stored as JSON; floats use shortest round-trip formatting, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub root: usize,
    pub bones: Vec<(usize, usize)>,
    pub params: ModelParams,
    pub train_config: TrainConfig,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub manifest_hash: String,
    pub warnings: Vec<String>,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        train_config: TrainConfig,
        history: Vec<EpochMetrics>,
        best_epoch: usize,
        manifest_hash: String,
        warnings: Vec<String>,
        graph: &DirectedSkeletonGraph,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            root: graph.root(),
            bones: graph.bones().to_vec(),
            params,
            train_config,
            history,
            best_epoch,
            manifest_hash,
            warnings,
        }
    }

    pub fn graph(&self) -> Result<DirectedSkeletonGraph> {
        DirectedSkeletonGraph::new(self.bones.len() + 1, self.root, self.bones.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::CorruptCheckpoint("missing version tag".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let cp: Checkpoint = serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        cp.params
            .validate()
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        cp.graph().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        Ok(cp)
    }
}

pub fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, cp.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}
