//! Synthetic generators.
//!
//! `synth_cloud` imitates per-node monitoring of a compute cluster at one
//! minute resolution with three channels: incoming traffic, outgoing traffic
//! (bytes) and relative CPU load. Per node `j` with period `P = 1440`:
//!
//! ```text
//! s(t)   = 1 + 0.6 sin(2 pi t / P + phi) + 0.2 sin(4 pi t / P + 2 phi)
//! a_t    = 0.95 a_{t-1} + 0.25 e1_t          (shared traffic load)
//! b_t    = 0.90 b_{t-1} + 0.20 e2_t          (outgoing-only load)
//! c_t    = 0.90 c_{t-1} + 0.03 e3_t          (CPU jitter)
//! in_t   = A s(t) exp(a_t)
//! out_t  = B s(t) exp(0.8 a_t + b_t)
//! cpu_t  = clamp(0.1 + 0.3 ln(1 + s(t) exp(a_t)) + c_t, 0, 1)
//! ```
//!
//! with `A = exp(ln 5e5 + 0.3 u)`, `B = A * U(0.5, 1.5)`, `phi ~ U(0, 2 pi)`,
//! `u, e*` standard normal. Traffic is log-normal, hence nonnegative and
//! heavy-tailed; CPU follows traffic through `a_t`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub nodes: usize,
    pub steps: usize,
    pub seed: u64,
}

const PERIOD: f64 = 1440.0;

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn synth_cloud(config: &SynthConfig) -> Result<Vec<TimeSeries>> {
    if config.steps < 240 {
        return Err(Error::Range(format!(
            "synthetic series need at least 240 steps, got {}",
            config.steps
        )));
    }
    (0..config.nodes)
        .map(|j| {
            let mut rng = seeded(derive_seed(config.seed, &[j as u64]));
            let level_in = ((5e5f64).ln() + 0.3 * normal(&mut rng)).exp();
            let level_out = level_in * rng.random_range(0.5..1.5);
            let phi = rng.random_range(0.0..2.0 * PI);
            // start the latents at their stationary distribution
            let mut a = 0.25 / (1.0 - 0.95f64 * 0.95).sqrt() * normal(&mut rng);
            let mut b = 0.20 / (1.0 - 0.9f64 * 0.9).sqrt() * normal(&mut rng);
            let mut c = 0.03 / (1.0 - 0.9f64 * 0.9).sqrt() * normal(&mut rng);
            let mut values = Vec::with_capacity(config.steps * 3);
            for t in 0..config.steps {
                let tt = t as f64;
                let s = 1.0
                    + 0.6 * (2.0 * PI * tt / PERIOD + phi).sin()
                    + 0.2 * (4.0 * PI * tt / PERIOD + 2.0 * phi).sin();
                a = 0.95 * a + 0.25 * normal(&mut rng);
                b = 0.90 * b + 0.20 * normal(&mut rng);
                c = 0.90 * c + 0.03 * normal(&mut rng);
                let load = s * a.exp();
                values.push(level_in * load);
                values.push(level_out * s * (0.8 * a + b).exp());
                values.push((0.1 + 0.3 * load.ln_1p() + c).clamp(0.0, 1.0));
            }
            TimeSeries::complete(config.steps, 3, values)
        })
        .collect()
}

/// Independent Gaussian random walks with unit increments.
pub fn random_walk(dims: usize, steps: usize, seed: u64) -> TimeSeries {
    let mut rng = seeded(seed);
    let mut x = vec![0.0; dims];
    let mut values = Vec::with_capacity(steps * dims);
    for _ in 0..steps {
        for v in x.iter_mut() {
            *v += normal(&mut rng);
            values.push(*v);
        }
    }
    TimeSeries::complete(steps, dims, values).expect("finite by construction")
}

/// `x_t = 0.8 x_{t-1} + sin(2 pi t / 24 + phi_d) + 0.3 e_t` per dimension.
pub fn ar_seasonal(dims: usize, steps: usize, seed: u64) -> TimeSeries {
    let mut rng = seeded(seed);
    let phases: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut x = vec![0.0; dims];
    let mut values = Vec::with_capacity(steps * dims);
    for t in 0..steps {
        for (d, v) in x.iter_mut().enumerate() {
            *v = 0.8 * *v + (2.0 * PI * t as f64 / 24.0 + phases[d]).sin() + 0.3 * normal(&mut rng);
            values.push(*v);
        }
    }
    TimeSeries::complete(steps, dims, values).expect("finite by construction")
}
