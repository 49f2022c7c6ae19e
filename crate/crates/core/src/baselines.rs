//! Conventional comparison methods: imputing a missing value by the forecast
//! mean or by a forecast sample (presented to the network as a certain
//! observation), and Monte-Carlo multi-step forecasting.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::forecaster::{filter_generic, filter_series, FilterStep, UPropModel};
use crate::prob::DistVector;
use crate::rng::{derive_seed, seeded};

/// Imputed values are clamped to this magnitude (normalized units).
pub const IMPUTE_CLAMP: f64 = 8.0;

/// How a filtering pass treats missing inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Feed the predicted `(mu, sigma)`.
    Uprop,
    /// Feed `(mu, 0)`.
    Mean,
    /// Feed `(s, 0)` with `s ~ N(mu, sigma)`.
    Sample,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Uprop, Method::Mean, Method::Sample];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Uprop => "uprop",
            Method::Mean => "mean",
            Method::Sample => "sample",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uprop" => Ok(Method::Uprop),
            "mean" => Ok(Method::Mean),
            "sample" => Ok(Method::Sample),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected uprop, mean or sample)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeKind {
    Mean,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImputePolicy {
    pub kind: ImputeKind,
    /// Only used by [`ImputeKind::Sample`].
    pub seed: u64,
}

impl ImputePolicy {
    pub fn mean() -> Self {
        Self {
            kind: ImputeKind::Mean,
            seed: 0,
        }
    }

    pub fn sample(seed: u64) -> Self {
        Self {
            kind: ImputeKind::Sample,
            seed,
        }
    }
}

/// Filtering pass that imputes missing dimensions and presents the imputed
/// value as an observation (`sigma = 0`). Cold-start gaps impute from the
/// standard-normal prior.
pub fn filter_series_imputed(
    model: &UPropModel,
    series: &TimeSeries,
    policy: ImputePolicy,
) -> Result<Vec<FilterStep>> {
    match policy.kind {
        ImputeKind::Mean => filter_generic(
            model,
            series,
            |_, m, _| (m.clamp(-IMPUTE_CLAMP, IMPUTE_CLAMP), 0.0),
            |_, _| {},
        ),
        ImputeKind::Sample => {
            let mut rng = seeded(policy.seed);
            filter_generic(
                model,
                series,
                |_, m, s| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    ((m + s * e).clamp(-IMPUTE_CLAMP, IMPUTE_CLAMP), 0.0)
                },
                |_, _| {},
            )
        }
    }
}

/// Dispatches on `method`; `seed` drives the sample policy.
pub fn filter_with_method(
    model: &UPropModel,
    series: &TimeSeries,
    method: Method,
    seed: u64,
) -> Result<Vec<FilterStep>> {
    match method {
        Method::Uprop => filter_series(model, series),
        Method::Mean => filter_series_imputed(model, series, ImputePolicy::mean()),
        Method::Sample => filter_series_imputed(model, series, ImputePolicy::sample(seed)),
    }
}

/// Per-step empirical moments of sampled trajectories, `k x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// `samples[j][i]` is trajectory `i`'s draw at step `j + 1`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Monte-Carlo rollout: each trajectory draws from the predicted belief at
/// every step and feeds the draw as a certain observation. Trajectory `i`
/// uses its own generator derived from `(seed, i)`.
pub fn mc_rollout(
    model: &UPropModel,
    context: &[DistVector],
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<McSummary> {
    if n_samples < 2 {
        return Err(Error::Range(format!(
            "mc_rollout needs at least 2 samples, got {n_samples}"
        )));
    }
    if k == 0 || context.is_empty() {
        return Err(Error::Range("mc_rollout needs a context and k >= 1".into()));
    }
    let mut h0 = model.initial_state();
    let mut first = None;
    for c in context {
        first = Some(model.step_mut(c, &mut h0)?);
    }
    let first = first.expect("non-empty context");
    let n = model.dims();

    let trajectories: Vec<Vec<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let mut rng = seeded(derive_seed(seed, &[i as u64]));
            let mut h = h0.clone();
            let mut pred = first.clone();
            let mut path = Vec::with_capacity(k);
            for j in 0..k {
                let draw: Vec<f64> = (0..n)
                    .map(|d| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        pred.mu()[d] + pred.sigma()[d] * e
                    })
                    .collect();
                if j + 1 < k {
                    pred = model.step_mut(&DistVector::certain(&draw), &mut h)?;
                }
                path.push(draw);
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![vec![0.0; n]; k];
    let mut std = vec![vec![0.0; n]; k];
    let mut samples = vec![Vec::with_capacity(n_samples); k];
    for j in 0..k {
        for path in &trajectories {
            samples[j].push(path[j].clone());
        }
        for d in 0..n {
            let m = samples[j].iter().map(|v| v[d]).sum::<f64>() / n_samples as f64;
            let var =
                samples[j].iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / (n_samples - 1) as f64;
            mean[j][d] = m;
            std[j][d] = var.sqrt();
        }
    }
    Ok(McSummary { mean, std, samples })
}
