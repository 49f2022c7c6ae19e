//! Novelty signals derived from forecasts: predicted volatility, surprise of
//! the realized observation, and divergence between forecasts of the same
//! time point made from a recent and a stale origin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::forecaster::{
    continue_rollout, filter_series_with_states, FilterStep, Forecast, UPropModel,
};
use crate::prob::{kl, nll_term, DistVector};

pub const DEFAULT_NEAR: usize = 1;
pub const DEFAULT_FAR: usize = 8;
pub const DEFAULT_QUANTILE: f64 = 0.99;
pub const MIN_CALIBRATION_SCORES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoveltyKind {
    Volatility,
    Surprise,
    Kl,
}

impl NoveltyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoveltyKind::Volatility => "volatility",
            NoveltyKind::Surprise => "surprise",
            NoveltyKind::Kl => "kl",
        }
    }
}

impl fmt::Display for NoveltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoveltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volatility" => Ok(NoveltyKind::Volatility),
            "surprise" => Ok(NoveltyKind::Surprise),
            "kl" => Ok(NoveltyKind::Kl),
            other => Err(Error::Config(format!(
                "unknown novelty method `{other}` (expected kl, surprise or volatility)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyScore {
    pub t: usize,
    pub kind: NoveltyKind,
    pub value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub kind: NoveltyKind,
    pub cutoff: f64,
    pub quantile: f64,
}

impl Threshold {
    pub fn flags(&self, value: f64) -> bool {
        value > self.cutoff
    }

    pub fn apply(&self, raw: &[(usize, f64)]) -> Vec<NoveltyScore> {
        raw.iter()
            .map(|&(t, value)| NoveltyScore {
                t,
                kind: self.kind,
                value,
                flagged: self.flags(value),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilityMode {
    /// Mean over dimensions of the first-step sigma.
    #[default]
    Step1Mean,
    /// Max over dimensions of the first-step sigma.
    Step1Max,
    /// Mean over dimensions and all forecast steps.
    HorizonMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(near || far).
    #[default]
    NearFar,
    /// KL(far || near).
    FarNear,
}

pub fn volatility_score(f: &Forecast) -> f64 {
    volatility_score_with(f, VolatilityMode::Step1Mean)
}

pub fn volatility_score_with(f: &Forecast, mode: VolatilityMode) -> f64 {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    match mode {
        VolatilityMode::Step1Mean => mean(f.at(1).sigma()),
        VolatilityMode::Step1Max => f
            .at(1)
            .sigma()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        VolatilityMode::HorizonMean => {
            f.steps.iter().map(|b| mean(b.sigma())).sum::<f64>() / f.horizon() as f64
        }
    }
}

/// Per-point NLL of `x` under `belief`, averaged over observed dimensions.
pub fn surprise_score(belief: &DistVector, x: &[Option<f64>]) -> Result<f64> {
    if x.len() != belief.dims() {
        return Err(Error::Shape(format!(
            "{} values for a {}-dim belief",
            x.len(),
            belief.dims()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (d, xi) in x.iter().enumerate() {
        if let Some(v) = xi {
            total += nll_term(belief.mu()[d], belief.sigma()[d], *v);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedScore("every dimension is missing".into()));
    }
    Ok(total / count as f64)
}

fn check_offsets(near: usize, far: usize) -> Result<()> {
    if near < 1 || far < near {
        return Err(Error::Range(format!(
            "kl offsets need far >= near >= 1, got near {near}, far {far}"
        )));
    }
    Ok(())
}

fn directed_kl(p: &DistVector, q: &DistVector, direction: KlDirection) -> Result<f64> {
    match direction {
        KlDirection::NearFar => kl(p, q),
        KlDirection::FarNear => kl(q, p),
    }
}

/// Forecasts time `target_t` (0-based row index) from origins
/// `target_t - near` and `target_t - far`, each conditioning on the series up
/// to and including its origin, and returns KL(near || far).
pub fn kl_novelty(
    model: &UPropModel,
    series: &TimeSeries,
    target_t: usize,
    near: usize,
    far: usize,
) -> Result<f64> {
    check_offsets(near, far)?;
    if target_t < far + 1 {
        return Err(Error::Range(format!(
            "target {target_t} leaves no history before origin offset {far}"
        )));
    }
    let near_origin = target_t - near;
    if near_origin >= series.steps() {
        return Err(Error::Range(format!(
            "origin {near_origin} beyond a {}-step series",
            series.steps()
        )));
    }
    let head = series.slice(0, near_origin + 1)?;
    let (steps, states) = filter_series_with_states(model, &head)?;
    let p = forecast_from(model, &steps, &states, near_origin, near)?;
    let q = forecast_from(model, &steps, &states, target_t - far, far)?;
    kl(&p, &q)
}

fn forecast_from(
    model: &UPropModel,
    steps: &[FilterStep],
    states: &[crate::forecaster::HiddenState],
    origin: usize,
    ahead: usize,
) -> Result<DistVector> {
    let mut h = states[origin].clone();
    let first = steps[origin].forecast.at(1).clone();
    Ok(continue_rollout(model, &mut h, first, ahead)?
        .pop()
        .expect("ahead >= 1"))
}

/// KL novelty for every target `t` in `far + 1 .. steps` from a single
/// filtering pass.
pub fn kl_scores(
    model: &UPropModel,
    series: &TimeSeries,
    near: usize,
    far: usize,
    direction: KlDirection,
) -> Result<Vec<(usize, f64)>> {
    check_offsets(near, far)?;
    let (steps, states) = filter_series_with_states(model, series)?;
    let mut out = Vec::new();
    for t in far + 1..series.steps() {
        let p = forecast_from(model, &steps, &states, t - near, near)?;
        let q = forecast_from(model, &steps, &states, t - far, far)?;
        out.push((t, directed_kl(&p, &q, direction)?));
    }
    Ok(out)
}

/// Surprise of each row `t >= 1` under the one-step forecast from `t - 1`.
/// Rows with every dimension missing are skipped.
pub fn surprise_scores(model: &UPropModel, series: &TimeSeries) -> Result<Vec<(usize, f64)>> {
    let (steps, _) = filter_series_with_states(model, series)?;
    let mut out = Vec::new();
    for t in 1..series.steps() {
        match surprise_score(steps[t - 1].forecast.at(1), &series.row(t)) {
            Ok(v) => out.push((t, v)),
            Err(Error::UndefinedScore(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Volatility of the forecast for row `t` made at `t - 1`, for `t >= 1`.
pub fn volatility_scores(
    model: &UPropModel,
    series: &TimeSeries,
    mode: VolatilityMode,
    horizon: usize,
) -> Result<Vec<(usize, f64)>> {
    let (steps, states) = filter_series_with_states(model, series)?;
    let mut out = Vec::with_capacity(series.steps().saturating_sub(1));
    for t in 1..series.steps() {
        let f = if mode == VolatilityMode::HorizonMean && horizon > 1 {
            let mut h = states[t - 1].clone();
            Forecast {
                origin_t: t - 1,
                steps: continue_rollout(
                    model,
                    &mut h,
                    steps[t - 1].forecast.at(1).clone(),
                    horizon,
                )?,
            }
        } else {
            steps[t - 1].forecast.clone()
        };
        out.push((t, volatility_score_with(&f, mode)));
    }
    Ok(out)
}

/// Options for [`score_stream`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub near: usize,
    pub far: usize,
    pub direction: KlDirection,
    pub volatility: VolatilityMode,
    pub volatility_horizon: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
            direction: KlDirection::NearFar,
            volatility: VolatilityMode::Step1Mean,
            volatility_horizon: 1,
        }
    }
}

pub fn score_stream(
    model: &UPropModel,
    series: &TimeSeries,
    kind: NoveltyKind,
    opts: &ScoreOptions,
) -> Result<Vec<(usize, f64)>> {
    match kind {
        NoveltyKind::Kl => kl_scores(model, series, opts.near, opts.far, opts.direction),
        NoveltyKind::Surprise => surprise_scores(model, series),
        NoveltyKind::Volatility => {
            volatility_scores(model, series, opts.volatility, opts.volatility_horizon)
        }
    }
}

/// Linear-interpolation sample quantile (`h = (n - 1) q`) of unsorted data.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Calibration("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Range(format!("quantile {q} not in [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calibration(
            "non-finite score in calibration sample".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Cutoff at the empirical `q`-quantile of validation scores.
pub fn calibrate_threshold(kind: NoveltyKind, scores: &[f64], q: f64) -> Result<Threshold> {
    if scores.len() < MIN_CALIBRATION_SCORES {
        return Err(Error::Calibration(format!(
            "{} calibration scores, need at least {MIN_CALIBRATION_SCORES}",
            scores.len()
        )));
    }
    if !(0.5..1.0).contains(&q) {
        return Err(Error::Range(format!(
            "calibration quantile {q} not in [0.5, 1)"
        )));
    }
    Ok(Threshold {
        kind,
        cutoff: empirical_quantile(scores, q)?,
        quantile: q,
    })
}
