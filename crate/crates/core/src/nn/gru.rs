//! GRU cell and stacked GRU.
//!
//! Cell equations (reset applied before the candidate's recurrent product,
//! with separate input and hidden biases on the candidate):
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! n  = tanh(W_n x + b_in + r * (U_n h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dropout::dropout_mask;
use super::tensor::{sigmoid, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_r: Tensor2,
    pub w_z: Tensor2,
    pub w_n: Tensor2,
    pub u_r: Tensor2,
    pub u_z: Tensor2,
    pub u_n: Tensor2,
    pub b_r: Tensor2,
    pub b_z: Tensor2,
    pub b_in: Tensor2,
    pub b_hn: Tensor2,
}

/// Activations of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h + b_hn`
    un: Vec<f64>,
}

pub const GRU_TENSOR_NAMES: [&str; 10] = [
    "w_r", "w_z", "w_n", "u_r", "u_z", "u_n", "b_r", "b_z", "b_in", "b_hn",
];

impl GruCellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Tensor2::zeros(hidden_size, input_size);
        let u = || Tensor2::zeros(hidden_size, hidden_size);
        let b = || Tensor2::zeros(hidden_size, 1);
        Self {
            input_size,
            hidden_size,
            w_r: w(),
            w_z: w(),
            w_n: w(),
            u_r: u(),
            u_z: u(),
            u_n: u(),
            b_r: b(),
            b_z: b(),
            b_in: b(),
            b_hn: b(),
        }
    }

    /// Matrices uniform in ±1/sqrt(hidden_size), biases zero.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut p = Self::zeros(input_size, hidden_size);
        for t in [&mut p.w_r, &mut p.w_z, &mut p.w_n] {
            *t = Tensor2::uniform(hidden_size, input_size, bound, rng);
        }
        for t in [&mut p.u_r, &mut p.u_z, &mut p.u_n] {
            *t = Tensor2::uniform(hidden_size, hidden_size, bound, rng);
        }
        p
    }

    pub fn tensors(&self) -> [&Tensor2; 10] {
        [
            &self.w_r, &self.w_z, &self.w_n, &self.u_r, &self.u_z, &self.u_n, &self.b_r, &self.b_z,
            &self.b_in, &self.b_hn,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor2; 10] {
        [
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_n,
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_n,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_in,
            &mut self.b_hn,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_size, self.hidden_size);
        let expected = [
            (h, i),
            (h, i),
            (h, i),
            (h, h),
            (h, h),
            (h, h),
            (h, 1),
            (h, 1),
            (h, 1),
            (h, 1),
        ];
        for ((t, name), shape) in self.tensors().iter().zip(GRU_TENSOR_NAMES).zip(expected) {
            if t.shape() != shape || t.len() != shape.0 * shape.1 {
                return Err(Error::Shape(format!(
                    "GRU tensor {name} is {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size || h_prev.len() != self.hidden_size {
            return Err(Error::Shape(format!(
                "GRU cell expects input {} / hidden {}, got {} / {}",
                self.input_size,
                self.hidden_size,
                x.len(),
                h_prev.len()
            )));
        }
        Ok(self.forward_cached(x, h_prev).0)
    }

    pub fn forward_cached(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCellCache) {
        let hs = self.hidden_size;
        let mut r = self.b_r.data.clone();
        let mut z = self.b_z.data.clone();
        let mut n = self.b_in.data.clone();
        let mut un = self.b_hn.data.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        self.w_n.matvec_acc(x, &mut n);
        self.u_n.matvec_acc(h_prev, &mut un);
        let mut h = vec![0.0; hs];
        for i in 0..hs {
            r[i] = sigmoid(r[i]);
            z[i] = sigmoid(z[i]);
            n[i] = (n[i] + r[i] * un[i]).tanh();
            h[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
        }
        let cache = GruCellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            un,
        };
        (h, cache)
    }

    /// Accumulates parameter gradients into `grads` and input / previous-state
    /// gradients into `dx` / `dh_prev`, given `dh` = dL/dh'.
    pub fn backward(
        &self,
        cache: &GruCellCache,
        dh: &[f64],
        grads: &mut GruCellParams,
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let hs = self.hidden_size;
        let mut da_r = vec![0.0; hs];
        let mut da_z = vec![0.0; hs];
        let mut da_n = vec![0.0; hs];
        let mut d_un = vec![0.0; hs];
        for i in 0..hs {
            let (r, z, n) = (cache.r[i], cache.z[i], cache.n[i]);
            let dn = dh[i] * (1.0 - z);
            let dz = dh[i] * (cache.h_prev[i] - n);
            dh_prev[i] += dh[i] * z;
            da_n[i] = dn * (1.0 - n * n);
            let dr = da_n[i] * cache.un[i];
            d_un[i] = da_n[i] * r;
            da_z[i] = dz * z * (1.0 - z);
            da_r[i] = dr * r * (1.0 - r);
        }
        let x = &cache.x;
        let h = &cache.h_prev;

        grads.w_r.outer_acc(&da_r, x);
        grads.w_z.outer_acc(&da_z, x);
        grads.w_n.outer_acc(&da_n, x);
        grads.u_r.outer_acc(&da_r, h);
        grads.u_z.outer_acc(&da_z, h);
        grads.u_n.outer_acc(&d_un, h);
        for i in 0..hs {
            grads.b_r.data[i] += da_r[i];
            grads.b_z.data[i] += da_z[i];
            grads.b_in.data[i] += da_n[i];
            grads.b_hn.data[i] += d_un[i];
        }

        self.w_r.matvec_t_acc(&da_r, dx);
        self.w_z.matvec_t_acc(&da_z, dx);
        self.w_n.matvec_t_acc(&da_n, dx);
        self.u_r.matvec_t_acc(&da_r, dh_prev);
        self.u_z.matvec_t_acc(&da_z, dh_prev);
        self.u_n.matvec_t_acc(&d_un, dh_prev);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruStackParams {
    pub layers: Vec<GruCellParams>,
    pub dropout_rate: f64,
}

/// One time step through every layer of the stack.
#[derive(Debug, Clone)]
pub struct StackStepCache {
    pub cells: Vec<GruCellCache>,
    /// Inverted-dropout masks applied to the output of layer `l` before it
    /// feeds layer `l + 1`; `None` when dropout was off for this step.
    pub masks: Option<Vec<Vec<f64>>>,
}

impl GruStackParams {
    pub fn init<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { hidden_size };
                GruCellParams::init(inp, hidden_size, rng)
            })
            .collect();
        Self {
            layers,
            dropout_rate,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|c| GruCellParams::zeros(c.input_size, c.hidden_size))
                .collect(),
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_size)
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden_size)
    }

    pub fn zero_state(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| vec![0.0; l.hidden_size])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("GRU stack has no layers".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[1].input_size != pair[0].hidden_size {
                return Err(Error::Shape(format!(
                    "layer {} input {} does not match layer {} hidden {}",
                    i + 1,
                    pair[1].input_size,
                    i,
                    pair[0].hidden_size
                )));
            }
        }
        self.layers.iter().try_for_each(GruCellParams::validate)
    }

    /// Advances `h` by one step and returns the top-layer output with the
    /// cache needed for backpropagation.
    pub fn step_cached<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        h: &mut [Vec<f64>],
        dropout_on: bool,
        rng: &mut R,
    ) -> (Vec<f64>, StackStepCache) {
        let use_dropout = dropout_on && self.dropout_rate > 0.0;
        let mut cells = Vec::with_capacity(self.layers.len());
        let mut masks = use_dropout.then(Vec::new);
        let mut input = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, cell) in self.layers.iter().enumerate() {
            let (out, cache) = cell.forward_cached(&input, &h[l]);
            h[l].copy_from_slice(&out);
            cells.push(cache);
            input = out;
            if l < last {
                if let Some(masks) = masks.as_mut() {
                    let mask = dropout_mask(input.len(), self.dropout_rate, rng);
                    input.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    masks.push(mask);
                }
            }
        }
        (input, StackStepCache { cells, masks })
    }

    /// Inference-only step: no cache, no dropout.
    pub fn step(&self, x: &[f64], h: &mut [Vec<f64>]) -> Vec<f64> {
        let mut input = x.to_vec();
        for (l, cell) in self.layers.iter().enumerate() {
            let out = cell.forward_cached(&input, &h[l]).0;
            h[l].copy_from_slice(&out);
            input = out;
        }
        input
    }

    /// Backpropagates one step. `dtop` is dL/d(top output) from the readout,
    /// `dh_carry[l]` holds dL/dh_l flowing back from the next time step and is
    /// replaced with dL/dh_l at the previous step. Returns dL/dx.
    pub fn backward_step(
        &self,
        cache: &StackStepCache,
        dtop: &[f64],
        dh_carry: &mut [Vec<f64>],
        grads: &mut GruStackParams,
    ) -> Vec<f64> {
        let mut dout = dtop.to_vec();
        let mut dx = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let cell = &self.layers[l];
            for (d, c) in dout.iter_mut().zip(&dh_carry[l]) {
                *d += c;
            }
            dx = vec![0.0; cell.input_size];
            let mut dh_prev = vec![0.0; cell.hidden_size];
            cell.backward(
                &cache.cells[l],
                &dout,
                &mut grads.layers[l],
                &mut dx,
                &mut dh_prev,
            );
            dh_carry[l] = dh_prev;
            if l > 0 {
                if let Some(masks) = &cache.masks {
                    dx.iter_mut().zip(&masks[l - 1]).for_each(|(d, m)| *d *= m);
                }
                dout = dx.clone();
            }
        }
        dx
    }
}

/// Runs the stack over a `T x input` sequence. `h0` defaults to zeros.
/// Returns the `T x hidden` top-layer outputs and the final per-layer states.
pub fn gru_stack_forward<R: Rng + ?Sized>(
    stack: &GruStackParams,
    x_seq: &Tensor2,
    h0: Option<&[Vec<f64>]>,
    dropout_on: bool,
    rng: &mut R,
) -> Result<(Tensor2, Vec<Vec<f64>>)> {
    stack.validate()?;
    if x_seq.cols != stack.input_size() {
        return Err(Error::Shape(format!(
            "sequence width {} does not match stack input {}",
            x_seq.cols,
            stack.input_size()
        )));
    }
    let mut h = match h0 {
        Some(h0) => {
            if h0.len() != stack.layers.len()
                || h0
                    .iter()
                    .zip(&stack.layers)
                    .any(|(h, l)| h.len() != l.hidden_size)
            {
                return Err(Error::Shape(
                    "initial hidden state does not match stack".into(),
                ));
            }
            h0.to_vec()
        }
        None => stack.zero_state(),
    };
    let hidden = stack.hidden_size();
    let mut out = Tensor2::zeros(x_seq.rows, hidden);
    for t in 0..x_seq.rows {
        let (top, _) = stack.step_cached(x_seq.row(t), &mut h, dropout_on, rng);
        out.data[t * hidden..(t + 1) * hidden].copy_from_slice(&top);
    }
    Ok((out, h))
}
