//! Model checkpoints as JSON: format tag, version, model shape and the flat
//! parameter vector (see [`ModelParams::to_flat`]).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::mlp::{ModelConfig, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "casper-checkpoint";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: params.config().clone(),
            params: params.to_flat(),
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        if self.format != FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Load(format!(
                "unsupported checkpoint {} v{} (expected {FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        ModelParams::from_flat(self.config, &self.params)
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_params(params))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_params()
}
