//! Forecasting with uncertainty propagation.
//!
//! Inputs and outputs of the network are both belief vectors. Observations
//! enter as `(x, 0)`; a missing observation enters as the `(mu, sigma)` the
//! model predicted for it; multi-step forecasts feed each predicted belief
//! back as the next input. No path samples, so every forecast is a
//! deterministic function of model and data.

mod inference;
mod model;
mod train;
mod unroll;

pub(crate) use inference::filter_generic;
pub use inference::{
    continue_rollout, encode_input, filter_series, filter_series_with_states, forecast_at, rollout,
    FilterStep, Forecast,
};

pub use model::{HiddenState, ModelConfig, UPropModel, Weights};
pub use train::{train, TrainConfig};
pub use unroll::{sequence_loss, sequence_loss_grad, PlanStep, SequencePlan, StepInput};
