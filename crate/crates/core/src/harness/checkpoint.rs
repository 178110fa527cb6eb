use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result, TrainConfig};
use crate::corpus::Vocabulary;
use crate::model::ModelParams;
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "dgm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    tensor: Tensor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Blob {
    format: String,
    version: u32,
    fingerprint: String,
    config: TrainConfig,
    vocab: Vocabulary,
    params: Vec<NamedTensor>,
}

/// A trained model with the config and vocabulary it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let blob = Blob {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            fingerprint: self.config.fingerprint(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self
                .params
                .store
                .names()
                .iter()
                .zip(self.params.store.tensors())
                .map(|(n, t)| NamedTensor { name: n.clone(), tensor: t.clone() })
                .collect(),
        };
        serde_json::to_string(&blob).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let err = |m: String| HarnessError::Checkpoint(m);
        let blob: Blob = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
        if blob.format != CHECKPOINT_FORMAT || blob.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported format {} v{}", blob.format, blob.version)));
        }
        if blob.fingerprint != blob.config.fingerprint() {
            return Err(err("config fingerprint mismatch".into()));
        }
        blob.config.validate()?;
        let mut params = ModelParams::zeros(blob.config.model_config(blob.vocab.len()))?;
        if blob.params.len() != params.store.len() {
            return Err(err(format!("{} tensors, expected {}", blob.params.len(), params.store.len())));
        }
        for nt in blob.params {
            let id = params.store.find(&nt.name).ok_or_else(|| err(format!("unexpected tensor {}", nt.name)))?;
            let slot = params.store.get_mut(id);
            if slot.shape() != nt.tensor.shape() {
                return Err(err(format!(
                    "{} has shape {:?}, expected {:?}",
                    nt.name,
                    nt.tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = nt.tensor;
        }
        Ok(Self { config: blob.config, vocab: blob.vocab, params })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_json())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}
