//! Probabilistic multivariate time-series forecasting with deterministic
//! uncertainty propagation through a recurrent network.
//!
//! The model consumes and emits per-dimension Gaussian beliefs `(mu, sigma)`.
//! Observed values enter with `sigma = 0`, missing values enter as the belief
//! predicted for them, and multi-step forecasts feed predicted beliefs back
//! without sampling. Around that core the crate provides imputation baselines,
//! novelty scores, data handling and an evaluation harness.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fmt;
pub mod forecaster;
pub mod nn;
pub mod novelty;
pub mod prob;
pub mod rng;

pub use baselines::{ImputePolicy, Method};
pub use checkpoint::ModelCheckpoint;
pub use config::RunConfig;
pub use data::{DatasetSplit, NormStats, TimeSeries};
pub use error::{Error, Result};
pub use eval::EvalGrid;
pub use forecaster::{Forecast, ModelConfig, TrainConfig, UPropModel};
pub use novelty::{NoveltyKind, NoveltyScore, Threshold};
pub use prob::{DistVector, SigmaSquash};
