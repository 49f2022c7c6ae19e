use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new<'a>(learning_rate: f64, params: impl IntoIterator<Item = &'a Tensor2>) -> Self {
        let m: Vec<Tensor2> = params.into_iter().map(Tensor2::zeros_like).collect();
        let v = m.clone();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m,
            v,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor2>, grads: Vec<&Tensor2>) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "adam tensor {:?} vs param {:?} / grad {:?}",
                    m.shape(),
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor2 {
        Tensor2::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.5);
        let g = scalar(1.0);
        let mut adam = AdamState::new(0.001, [&p]);
        adam.step(vec![&mut p], vec![&g]).unwrap();
        assert!((p.data[0] - 0.5 + 0.001).abs() < 1e-6);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor2::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let before = p.clone();
        let g = Tensor2::zeros(2, 2);
        let mut adam = AdamState::new(0.001, [&p]);
        adam.step(vec![&mut p], vec![&g]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_descends_every_coordinate() {
        let mut p = Tensor2::zeros(1, 5);
        let g = Tensor2::from_vec(1, 5, vec![2.0, -0.1, 1e-3, -7.0, 0.4]).unwrap();
        let mut adam = AdamState::new(0.01, [&p]);
        adam.step(vec![&mut p], vec![&g]).unwrap();
        for (d, gi) in p.data.iter().zip(&g.data) {
            assert_eq!(d.signum(), -gi.signum());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(0.0);
        let g = Tensor2::zeros(1, 2);
        let mut adam = AdamState::new(0.001, [&p]);
        assert!(matches!(
            adam.step(vec![&mut p], vec![&g]),
            Err(Error::Shape(_))
        ));
    }
}
