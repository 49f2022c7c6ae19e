use serde::{Deserialize, Serialize};

use super::model::{HiddenState, UPropModel};
use crate::data::{NormStats, TimeSeries};
use crate::error::{Error, Result};
use crate::prob::DistVector;

/// Beliefs for `origin_t + 1 ..= origin_t + horizon`, normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub origin_t: usize,
    pub steps: Vec<DistVector>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Belief for `origin_t + j`, `j >= 1`.
    pub fn at(&self, j: usize) -> &DistVector {
        &self.steps[j - 1]
    }

    pub fn denormalized(&self, norm: &NormStats) -> Vec<DistVector> {
        self.steps
            .iter()
            .map(|b| norm.denormalize_belief(b))
            .collect()
    }
}

/// Builds the network input for one step. Observed dimensions become
/// `(value, 0)`; a missing dimension takes the pending one-step forecast for
/// this step, or the prior when there is none yet.
pub fn encode_input(
    obs: &[Option<f64>],
    pending: Option<&DistVector>,
    prior: &DistVector,
) -> DistVector {
    let fallback = pending.unwrap_or(prior);
    let mut out = DistVector::certain(&vec![0.0; obs.len()]);
    for (d, o) in obs.iter().enumerate() {
        match o {
            Some(x) => out.set(d, *x, 0.0),
            None => out.set(d, fallback.mu()[d], fallback.sigma()[d]),
        }
    }
    out
}

/// Runs `context` through the model, then feeds each prediction back as the
/// next input, without sampling, for `k` predictions in total.
pub fn rollout(model: &UPropModel, context: &[DistVector], k: usize) -> Result<Forecast> {
    if context.is_empty() {
        return Err(Error::Range("rollout needs a non-empty context".into()));
    }
    let mut h = model.initial_state();
    let mut pred = None;
    for input in context {
        pred = Some(model.step_mut(input, &mut h)?);
    }
    let first = pred.expect("non-empty context");
    Ok(Forecast {
        origin_t: context.len() - 1,
        steps: continue_rollout(model, &mut h, first, k)?,
    })
}

/// Extends a one-step prediction `first` made from state `h` to `k` steps.
pub fn continue_rollout(
    model: &UPropModel,
    h: &mut HiddenState,
    first: DistVector,
    k: usize,
) -> Result<Vec<DistVector>> {
    if k == 0 {
        return Err(Error::Range("rollout horizon must be at least 1".into()));
    }
    let mut steps = Vec::with_capacity(k);
    let mut cur = first;
    for _ in 1..k {
        let next = model.step_mut(&cur, h)?;
        steps.push(cur);
        cur = next;
    }
    steps.push(cur);
    Ok(steps)
}

/// One step of an online filtering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub t: usize,
    /// What the network consumed at `t`.
    pub input: DistVector,
    /// One-step forecast for `t + 1`.
    pub forecast: Forecast,
}

/// Online pass with a pluggable treatment of missing dimensions: `fill` maps
/// the belief `(mu, sigma)` available for a missing cell to the `(mu, sigma)`
/// fed to the network.
pub(crate) fn filter_generic(
    model: &UPropModel,
    series: &TimeSeries,
    mut fill: impl FnMut(usize, f64, f64) -> (f64, f64),
    mut on_state: impl FnMut(usize, &HiddenState),
) -> Result<Vec<FilterStep>> {
    if series.dims() != model.dims() {
        return Err(Error::Shape(format!(
            "{}-dim series for a {}-dim model",
            series.dims(),
            model.dims()
        )));
    }
    let prior = DistVector::standard(model.dims());
    let mut h = model.initial_state();
    let mut pending: Option<DistVector> = None;
    let mut out = Vec::with_capacity(series.steps());
    for t in 0..series.steps() {
        let obs = series.row(t);
        let mut input = encode_input(&obs, pending.as_ref(), &prior);
        for (d, o) in obs.iter().enumerate() {
            if o.is_none() {
                let (m, s) = fill(d, input.mu()[d], input.sigma()[d]);
                input.set(d, m, s);
            }
        }
        let pred = model.step_mut(&input, &mut h)?;
        on_state(t, &h);
        pending = Some(pred.clone());
        out.push(FilterStep {
            t,
            input,
            forecast: Forecast {
                origin_t: t,
                steps: vec![pred],
            },
        });
    }
    Ok(out)
}

/// Online uncertainty-propagating pass over a (normalized) series: missing
/// dimensions are fed the previous step's predicted `(mu, sigma)`.
pub fn filter_series(model: &UPropModel, series: &TimeSeries) -> Result<Vec<FilterStep>> {
    filter_generic(model, series, |_, m, s| (m, s), |_, _| {})
}

/// Like [`filter_series`], also returning the hidden state after each step.
pub fn filter_series_with_states(
    model: &UPropModel,
    series: &TimeSeries,
) -> Result<(Vec<FilterStep>, Vec<HiddenState>)> {
    let mut states = Vec::with_capacity(series.steps());
    let steps = filter_generic(
        model,
        series,
        |_, m, s| (m, s),
        |_, h| states.push(h.clone()),
    )?;
    Ok((steps, states))
}

/// Forecast of rows `origin + 1 ..= origin + k` from an uncertainty-propagating
/// pass over rows `0..=origin` of a normalized series.
pub fn forecast_at(
    model: &UPropModel,
    series: &TimeSeries,
    origin: usize,
    k: usize,
) -> Result<Forecast> {
    if origin >= series.steps() {
        return Err(Error::Range(format!(
            "origin {origin} outside a {}-step series",
            series.steps()
        )));
    }
    let head = series.slice(0, origin + 1)?;
    let (steps, mut states) = filter_series_with_states(model, &head)?;
    let mut h = states.pop().expect("non-empty head");
    let first = steps[origin].forecast.at(1).clone();
    Ok(Forecast {
        origin_t: origin,
        steps: continue_rollout(model, &mut h, first, k)?,
    })
}
