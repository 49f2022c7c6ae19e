//! Run configuration shared by the CLI commands.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::data::{split, window, DatasetSplit, SplitFractions, TimeSeries};
use crate::error::{Error, Result};
use crate::forecaster::{ModelConfig, TrainConfig};
use crate::novelty::{KlDirection, ScoreOptions, VolatilityMode, DEFAULT_FAR, DEFAULT_NEAR};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Checked against the data when set.
    pub dims: Option<usize>,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub readout_hidden: Vec<usize>,
    /// Lookahead of a single-model training run.
    pub lookahead: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub window: usize,
    /// Defaults to `window` (disjoint windows).
    pub stride: Option<usize>,
    pub split: SplitFractions,
    pub sigma_floor: f64,
    pub seed: u64,
    pub missing_rates: Vec<f64>,
    pub lookaheads: Vec<usize>,
    pub methods: Vec<Method>,
    /// Unscored leading rows per evaluation window; every forecast row is scored when unset.
    pub eval_warmup: Option<usize>,
    pub kl_near: usize,
    pub kl_far: usize,
    pub kl_direction: KlDirection,
    pub volatility: VolatilityMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dims: None,
            layers: 3,
            hidden: 64,
            dropout: 0.2,
            readout_hidden: Vec::new(),
            lookahead: None,
            epochs: 20,
            lr: 1e-3,
            batch_size: 32,
            window: 120,
            stride: None,
            split: SplitFractions::default(),
            sigma_floor: 1e-3,
            seed: 0,
            missing_rates: vec![0.05, 0.1, 0.2, 0.5],
            lookaheads: vec![2, 4, 8, 16],
            methods: Method::ALL.to_vec(),
            eval_warmup: None,
            kl_near: DEFAULT_NEAR,
            kl_far: DEFAULT_FAR,
            kl_direction: KlDirection::NearFar,
            volatility: VolatilityMode::Step1Mean,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)
            .map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window)
    }

    pub fn model_config(&self, dims: usize) -> ModelConfig {
        ModelConfig {
            dims,
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            readout_hidden: self.readout_hidden.clone(),
            sigma_floor: self.sigma_floor,
        }
    }

    pub fn train_config(&self, lookahead: usize) -> TrainConfig {
        TrainConfig {
            lookahead,
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            window_length: self.window,
            seed: self.seed,
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            near: self.kl_near,
            far: self.kl_far,
            direction: self.kl_direction,
            volatility: self.volatility,
            volatility_horizon: self.kl_far,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == Some(0) {
            return Err(Error::Config("dims must be at least 1".into()));
        }
        self.model_config(self.dims.unwrap_or(1)).validate()?;
        if self.window < 2 {
            return Err(Error::Config(format!(
                "window {} must be at least 2",
                self.window
            )));
        }
        if self.stride == Some(0) {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr {} must be a positive number",
                self.lr
            )));
        }
        for k in self.lookahead.iter().chain(&self.lookaheads) {
            self.train_config(*k).validate()?;
        }
        if self.lookaheads.is_empty() {
            return Err(Error::Config("lookaheads must not be empty".into()));
        }
        if let Some(r) = self.missing_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("missing rate {r} must be in [0, 1)")));
        }
        if !self.methods.contains(&Method::Uprop) {
            return Err(Error::Config(
                "methods must include uprop (difference tables are relative to it)".into(),
            ));
        }
        if self.kl_near < 1 || self.kl_far <= self.kl_near {
            return Err(Error::Config(format!(
                "kl offsets need kl_far > kl_near >= 1, got {} and {}",
                self.kl_near, self.kl_far
            )));
        }
        if let Some(w) = self.eval_warmup {
            if w >= self.window {
                return Err(Error::Config(format!(
                    "eval_warmup {w} must be below window {}",
                    self.window
                )));
            }
        }
        self.split.validate()
    }

    /// Checks `series` against `dims` and returns the dimension count.
    pub fn check_dims(&self, series: &[TimeSeries]) -> Result<usize> {
        let n = series
            .first()
            .ok_or_else(|| Error::Data("no input series".into()))?
            .dims();
        if let Some(s) = series.iter().find(|s| s.dims() != n) {
            return Err(Error::Data(format!(
                "series with {} dims among {n}-dim series",
                s.dims()
            )));
        }
        match self.dims {
            Some(d) if d != n => Err(Error::Data(format!("config says {d} dims, data has {n}"))),
            _ => Ok(n),
        }
    }

    /// Windows every series, then shuffles and partitions the pooled windows.
    pub fn split_series(&self, series: &[TimeSeries]) -> Result<DatasetSplit> {
        self.check_dims(series)?;
        let mut windows = Vec::new();
        for s in series {
            windows.extend(window(s, self.window, self.stride())?);
        }
        split(windows, self.split, derive_seed(self.seed, &[0x5b17]))
    }
}
