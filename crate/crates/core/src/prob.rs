//! Diagonal-Gaussian beliefs and the quantities computed on them.
//!
//! A [`DistVector`] carries one `(mu, sigma)` pair per dimension. A scale of
//! exactly zero encodes a certain observation; forecasts always carry a
//! strictly positive scale. On the wire the vector is flattened as
//! `[mu_0 .. mu_{N-1}, sigma_0 .. sigma_{N-1}]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistVector {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl DistVector {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Shape(format!(
                "{} locations vs {} scales",
                mu.len(),
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::Domain(format!("negative or NaN scale {s}")));
        }
        Ok(Self { mu, sigma })
    }

    /// Fully observed values: every scale is zero.
    pub fn certain(x: &[f64]) -> Self {
        Self {
            mu: x.to_vec(),
            sigma: vec![0.0; x.len()],
        }
    }

    /// Independent standard normals, the cold-start prior in normalized units.
    pub fn standard(dims: usize) -> Self {
        Self {
            mu: vec![0.0; dims],
            sigma: vec![1.0; dims],
        }
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Shape(format!(
                "flat belief of odd length {}",
                flat.len()
            )));
        }
        let n = flat.len() / 2;
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dims());
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.sigma);
        v
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub(crate) fn set(&mut self, i: usize, mu: f64, sigma: f64) {
        debug_assert!(sigma >= 0.0);
        self.mu[i] = mu;
        self.sigma[i] = sigma;
    }

    pub(crate) fn from_parts_unchecked(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        debug_assert_eq!(mu.len(), sigma.len());
        Self { mu, sigma }
    }
}

/// Maps an unconstrained readout value to a scale: `softplus(raw) + floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSquash {
    pub floor: f64,
}

impl Default for SigmaSquash {
    fn default() -> Self {
        Self { floor: 1e-3 }
    }
}

impl SigmaSquash {
    pub fn new(floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma floor must be positive, got {floor}"
            )));
        }
        Ok(Self { floor })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        squash_sigma(raw, *self)
    }

    /// d(apply)/d(raw), always in (0, 1).
    pub fn derivative(&self, raw: f64) -> f64 {
        crate::nn::sigmoid(raw)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn squash_sigma(raw: f64, squash: SigmaSquash) -> f64 {
    softplus(raw) + squash.floor
}

fn require_positive(d: &DistVector, what: &str) -> Result<()> {
    match d.sigma.iter().position(|&s| !(s > 0.0)) {
        Some(i) => Err(Error::Domain(format!(
            "{what} has zero scale in dimension {i}"
        ))),
        None => Ok(()),
    }
}

/// Per-dimension negative log-likelihood term.
#[inline]
pub fn nll_term(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    HALF_LN_2PI + sigma.ln() + 0.5 * z * z
}

/// Negative log-likelihood of `x` under the belief, summed over dimensions.
pub fn nll(belief: &DistVector, x: &[f64]) -> Result<f64> {
    if x.len() != belief.dims() {
        return Err(Error::Shape(format!(
            "{} values for a {}-dim belief",
            x.len(),
            belief.dims()
        )));
    }
    require_positive(belief, "belief")?;
    Ok(belief
        .mu
        .iter()
        .zip(&belief.sigma)
        .zip(x)
        .map(|((&m, &s), &xi)| nll_term(m, s, xi))
        .sum())
}

/// KL(p || q) between diagonal Gaussians.
pub fn kl(p: &DistVector, q: &DistVector) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::Shape(format!(
            "kl between {}-dim and {}-dim beliefs",
            p.dims(),
            q.dims()
        )));
    }
    require_positive(p, "p")?;
    require_positive(q, "q")?;
    let mut total = 0.0;
    for i in 0..p.dims() {
        let (mp, sp, mq, sq) = (p.mu[i], p.sigma[i], q.mu[i], q.sigma[i]);
        let d = mp - mq;
        total += (sq / sp).ln() + (sp * sp + d * d) / (2.0 * sq * sq) - 0.5;
    }
    // rounding can push identical-ish inputs a hair below zero
    Ok(total.max(0.0))
}

/// Central 95% interval `mu ± 1.959964 sigma` per dimension.
pub fn interval95(belief: &DistVector) -> (Vec<f64>, Vec<f64>) {
    let lower = belief
        .mu
        .iter()
        .zip(&belief.sigma)
        .map(|(m, s)| m - Z95 * s)
        .collect();
    let upper = belief
        .mu
        .iter()
        .zip(&belief.sigma)
        .map(|(m, s)| m + Z95 * s)
        .collect();
    (lower, upper)
}
