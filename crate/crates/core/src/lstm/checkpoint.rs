//! Versioned JSON checkpoint. Floats are written in shortest round-trip form
//! and parsed with correct rounding, so parameters reload bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::LstmNetwork;
use crate::cohort::{FeatureRegistry, SequenceConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_KIND: &str = "bilstm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCheckpoint {
    pub schema_version: u32,
    pub kind: String,
    pub registry_hash: String,
    pub registry: FeatureRegistry,
    pub sequence: SequenceConfig,
    pub network: LstmNetwork,
}

impl LstmCheckpoint {
    pub fn new(registry: FeatureRegistry, sequence: SequenceConfig, network: LstmNetwork) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            kind: CHECKPOINT_KIND.into(),
            registry_hash: registry.layout_hash(),
            registry,
            sequence,
            network,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut ckpt: Self = serde_json::from_str(s)?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION || ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected {CHECKPOINT_KIND} schema {CHECKPOINT_SCHEMA_VERSION}, found {} schema {}",
                ckpt.kind, ckpt.schema_version
            )));
        }
        ckpt.registry = ckpt.registry.restore()?;
        if ckpt.registry.layout_hash() != ckpt.registry_hash {
            return Err(Error::Checkpoint("registry hash mismatch".into()));
        }
        if ckpt.network.input_size != ckpt.registry.len() {
            return Err(Error::Checkpoint(format!(
                "network input size {} differs from registry arity {}",
                ckpt.network.input_size,
                ckpt.registry.len()
            )));
        }
        ckpt.network.check_shapes()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
