use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{GruStackParams, Readout, Tensor2, GRU_TENSOR_NAMES};
use crate::prob::{DistVector, SigmaSquash};
use crate::rng::{derive_seed, seeded};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: usize,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Widths of optional tanh layers in the readout; empty for a single
    /// affine readout.
    #[serde(default)]
    pub readout_hidden: Vec<usize>,
    pub sigma_floor: f64,
}

impl ModelConfig {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            layers: 3,
            hidden: 64,
            dropout: 0.2,
            readout_hidden: Vec::new(),
            sigma_floor: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Config("dims must be at least 1".into()));
        }
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("layers and hidden must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must be in [0, 1)",
                self.dropout
            )));
        }
        if self.readout_hidden.contains(&0) {
            return Err(Error::Config(
                "readout hidden widths must be positive".into(),
            ));
        }
        SigmaSquash::new(self.sigma_floor).map(|_| ())
    }
}

/// Trainable tensors of the model; the same type holds gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub stack: GruStackParams,
    pub readout: Readout,
}

impl Weights {
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, &[0x1417]));
        let stack = GruStackParams::init(
            2 * config.dims,
            config.hidden,
            config.layers,
            config.dropout,
            &mut rng,
        );
        let readout = Readout::init(
            config.hidden,
            &config.readout_hidden,
            2 * config.dims,
            &mut rng,
        );
        Self { stack, readout }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            stack: self.stack.zeros_like(),
            readout: self.readout.zeros_like(),
        }
    }

    /// Stable names in a fixed order, e.g. `gru.0.w_r`, `readout.0.weight`.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.stack.layers.len() {
            names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("gru.{l}.{n}")));
        }
        for i in 0..self.readout.layers.len() {
            names.push(format!("readout.{i}.weight"));
            names.push(format!("readout.{i}.bias"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor2> {
        let mut out: Vec<&Tensor2> = Vec::new();
        for cell in &self.stack.layers {
            out.extend(cell.tensors());
        }
        for lin in &self.readout.layers {
            out.push(&lin.weight);
            out.push(&lin.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out: Vec<&mut Tensor2> = Vec::new();
        for cell in &mut self.stack.layers {
            out.extend(cell.tensors_mut());
        }
        for lin in &mut self.readout.layers {
            out.push(&mut lin.weight);
            out.push(&mut lin.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(s));
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }
}

/// Per-layer GRU state owned by the caller of the inference API.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub Vec<Vec<f64>>);

/// The uncertainty-propagating forecaster: a GRU stack fed with
/// `[mu, sigma]` belief vectors and a readout emitting the next belief.
#[derive(Debug, Clone, PartialEq)]
pub struct UPropModel {
    pub config: ModelConfig,
    pub weights: Weights,
    pub squash: SigmaSquash,
    pub norm: NormStats,
}

impl UPropModel {
    pub fn new(config: ModelConfig, norm: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = Weights::init(&config, seed);
        Self::from_parts(config, weights, norm)
    }

    pub fn from_parts(config: ModelConfig, weights: Weights, norm: NormStats) -> Result<Self> {
        config.validate()?;
        let squash = SigmaSquash::new(config.sigma_floor)?;
        let model = Self {
            config,
            weights,
            squash,
            norm,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.config.dims;
        self.weights.stack.validate()?;
        self.weights.readout.validate()?;
        if self.weights.stack.input_size() != 2 * n {
            return Err(Error::Shape(format!(
                "stack input {} != 2 x {n}",
                self.weights.stack.input_size()
            )));
        }
        if self.weights.readout.output_size() != 2 * n {
            return Err(Error::Shape(format!(
                "readout output {} != 2 x {n}",
                self.weights.readout.output_size()
            )));
        }
        if self.weights.readout.input_size() != self.weights.stack.hidden_size() {
            return Err(Error::Shape(
                "readout input does not match GRU hidden size".into(),
            ));
        }
        if self.norm.dims() != n {
            return Err(Error::Shape(format!(
                "{} normalization pairs for {n} dims",
                self.norm.dims()
            )));
        }
        self.norm.validate()
    }

    pub fn dims(&self) -> usize {
        self.config.dims
    }

    pub fn initial_state(&self) -> HiddenState {
        HiddenState(self.weights.stack.zero_state())
    }

    /// Splits raw readout values into a belief.
    pub(crate) fn belief_from_raw(&self, raw: &[f64]) -> DistVector {
        let n = self.dims();
        let mu = raw[..n].to_vec();
        let sigma = raw[n..].iter().map(|&r| self.squash.apply(r)).collect();
        DistVector::from_parts_unchecked(mu, sigma)
    }

    /// One inference step (dropout off), advancing `h` in place.
    pub fn step_mut(&self, input: &DistVector, h: &mut HiddenState) -> Result<DistVector> {
        if input.dims() != self.dims() {
            return Err(Error::Shape(format!(
                "{}-dim input for a {}-dim model",
                input.dims(),
                self.dims()
            )));
        }
        if h.0.len() != self.weights.stack.layers.len() {
            return Err(Error::Shape(
                "hidden state does not match the GRU stack".into(),
            ));
        }
        let top = self.weights.stack.step(&input.flatten(), &mut h.0);
        Ok(self.belief_from_raw(&self.weights.readout.forward(&top)))
    }

    /// One inference step returning the prediction and the advanced state.
    pub fn step(&self, input: &DistVector, h: &HiddenState) -> Result<(DistVector, HiddenState)> {
        let mut next = h.clone();
        let pred = self.step_mut(input, &mut next)?;
        Ok((pred, next))
    }
}
