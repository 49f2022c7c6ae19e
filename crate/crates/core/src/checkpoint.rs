//! JSON checkpoints: hyperparameters, normalization statistics and every
//! parameter tensor as a named row-major array.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::forecaster::{ModelConfig, TrainConfig, UPropModel, Weights};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub dims: usize,
    pub hyperparameters: Hyperparameters,
    pub norm: NormStats,
    pub weights: Vec<NamedTensor>,
    pub seed: u64,
    pub final_loss: f64,
}

impl ModelCheckpoint {
    pub fn from_model(model: &UPropModel, train: &TrainConfig, final_loss: f64) -> Self {
        let weights = model
            .weights
            .names()
            .into_iter()
            .zip(model.weights.tensors())
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.rows,
                cols: t.cols,
                data: t.data.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            dims: model.dims(),
            hyperparameters: Hyperparameters {
                model: model.config.clone(),
                train: train.clone(),
            },
            norm: model.norm.clone(),
            weights,
            seed: train.seed,
            final_loss,
        }
    }

    pub fn to_model(&self) -> Result<UPropModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let config = &self.hyperparameters.model;
        if config.dims != self.dims {
            return Err(Error::Checkpoint(format!(
                "dims {} disagree with model config {}",
                self.dims, config.dims
            )));
        }
        config.validate()?;
        let mut weights = Weights::init(config, 0);
        let names = weights.names();
        if names.len() != self.weights.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, architecture has {}",
                self.weights.len(),
                names.len()
            )));
        }
        for ((name, slot), stored) in names.iter().zip(weights.tensors_mut()).zip(&self.weights) {
            if *name != stored.name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{name}`, found `{}`",
                    stored.name
                )));
            }
            if (slot.rows, slot.cols) != (stored.rows, stored.cols)
                || stored.data.len() != stored.rows * stored.cols
            {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has the wrong shape"
                )));
            }
            slot.data.copy_from_slice(&stored.data);
        }
        UPropModel::from_parts(config.clone(), weights, self.norm.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Checkpoint(format!("no checkpoint at {}", path.display()))
            }
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }
}
