use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, UPropModel, Weights};
use super::unroll::{sequence_loss_grad, SequencePlan};
use crate::data::{NormStats, TimeSeries};
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lookahead: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub window_length: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lookahead: 4,
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            window_length: 120,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Smallest context fed before the rollout: `ceil(L / 4)`.
    pub fn min_anchor(&self) -> usize {
        self.window_length.div_ceil(4).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookahead == 0 || self.lookahead >= self.window_length {
            return Err(Error::Config(format!(
                "lookahead {} must be in [1, window {})",
                self.lookahead, self.window_length
            )));
        }
        if self.min_anchor() > self.window_length - self.lookahead {
            return Err(Error::Config(format!(
                "window {} leaves no room for a context of {} plus lookahead {}",
                self.window_length,
                self.min_anchor(),
                self.lookahead
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Trains on complete windows (original units). Normalization statistics
/// are fitted on these windows and stored in the returned model. Returns the
/// model and the mean training loss of every epoch.
pub fn train(
    windows: &[TimeSeries],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(UPropModel, Vec<f64>)> {
    config.validate()?;
    model_config.validate()?;
    if windows.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    for (i, w) in windows.iter().enumerate() {
        if !w.is_complete() {
            return Err(Error::Data(format!(
                "training window {i} contains missing values"
            )));
        }
        if w.steps() != config.window_length {
            return Err(Error::Config(format!(
                "training window {i} has {} steps, config says {}",
                w.steps(),
                config.window_length
            )));
        }
        if w.dims() != model_config.dims {
            return Err(Error::Shape(format!(
                "training window {i} has {} dims",
                w.dims()
            )));
        }
    }
    let norm = NormStats::fit(windows)?;
    let data: Vec<TimeSeries> = windows
        .iter()
        .map(|w| norm.normalize(w))
        .collect::<Result<_>>()?;
    let mut model = UPropModel::new(model_config.clone(), norm, config.seed)?;
    let mut adam = AdamState::new(config.learning_rate, model.weights.tensors());

    let (lo, hi) = (config.min_anchor(), config.window_length - config.lookahead);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = seeded(derive_seed(config.seed, &[0xe90c, epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Option<Weights> = None;
            for &i in batch {
                let anchor = rng.random_range(lo..=hi);
                let plan = SequencePlan::training(&data[i], anchor, config.lookahead)?;
                let (loss, grads) = sequence_loss_grad(&model, &plan, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite training loss in epoch {}",
                        epoch + 1
                    )));
                }
                epoch_loss += loss;
                match acc.as_mut() {
                    Some(a) => a.add_assign(&grads),
                    None => acc = Some(grads),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            grads.scale(1.0 / batch.len() as f64);
            adam.step(model.weights.tensors_mut(), grads.tensors())?;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok((model, history))
}
