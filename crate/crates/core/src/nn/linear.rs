use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl LinearParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2::zeros(output, input),
            bias: Tensor2::zeros(output, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, bound: f64, rng: &mut R) -> Self {
        Self {
            weight: Tensor2::uniform(output, input, bound, rng),
            bias: Tensor2::zeros(output, 1),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.shape() != (self.weight.rows, 1)
            || self.weight.len() != self.weight.rows * self.weight.cols
            || self.bias.len() != self.weight.rows
        {
            return Err(Error::Shape(format!(
                "linear weight {:?} with bias {:?}",
                self.weight.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data.clone();
        self.weight.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates dW, db into `grads` and dL/dx into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut LinearParams, dx: &mut [f64]) {
        grads.weight.outer_acc(dy, x);
        for (b, d) in grads.bias.data.iter_mut().zip(dy) {
            *b += d;
        }
        self.weight.matvec_t_acc(dy, dx);
    }
}

/// Readout network: affine layers with `tanh` between them. A single layer is
/// the plain fully connected readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub layers: Vec<LinearParams>,
}

#[derive(Debug, Clone)]
pub struct ReadoutCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
}

impl Readout {
    /// `hidden` lists the widths of optional tanh hidden layers.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths
            .windows(2)
            .map(|w| LinearParams::init(w[0], w[1], 1.0 / (w[0] as f64).sqrt(), rng))
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LinearParams::zeros(l.input_size(), l.output_size()))
                .collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, LinearParams::input_size)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, LinearParams::output_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("readout has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[1].input_size() != pair[0].output_size() {
                return Err(Error::Shape("readout layer widths do not chain".into()));
            }
        }
        self.layers.iter().try_for_each(LinearParams::validate)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, ReadoutCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&cur);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(cur);
            cur = y;
        }
        (cur, ReadoutCache { inputs })
    }

    /// Returns dL/dx.
    pub fn backward(&self, cache: &ReadoutCache, dy: &[f64], grads: &mut Readout) -> Vec<f64> {
        let mut d = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let mut dx = vec![0.0; layer.input_size()];
            layer.backward(&cache.inputs[i], &d, &mut grads.layers[i], &mut dx);
            if i > 0 {
                // input of layer i is tanh output of layer i-1
                for (g, a) in dx.iter_mut().zip(&cache.inputs[i]) {
                    *g *= 1.0 - a * a;
                }
            }
            d = dx;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_through_both_paths() {
        // f(w) = w * x with x = w, so df/dw = x + w = 2w
        let w = 3.0;
        let lin = LinearParams {
            weight: Tensor2::from_vec(1, 1, vec![w]).unwrap(),
            bias: Tensor2::zeros(1, 1),
        };
        let mut grads = LinearParams::zeros(1, 1);
        let mut dx = vec![0.0];
        assert_eq!(lin.forward(&[w]), vec![9.0]);
        lin.backward(&[w], &[1.0], &mut grads, &mut dx);
        assert_eq!(grads.weight.data[0] + dx[0], 6.0);
    }

    #[test]
    fn readout_with_hidden_layer_shapes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let r = Readout::init(4, &[5], 6, &mut rng);
        r.validate().unwrap();
        assert_eq!(r.forward(&[0.1, 0.2, 0.3, 0.4]).len(), 6);
        let mut bad = r.clone();
        bad.layers[1] = LinearParams::zeros(3, 6);
        assert!(bad.validate().is_err());
    }
}
