//! Parameter storage shared by every trainable block: value, gradient slot,
//! and Adam moment accumulators, all shape-locked together.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    m: Tensor2,
    v: Tensor2,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param {
            value: Tensor2::zeros(rows, cols),
            grad: Tensor2::zeros(rows, cols),
            m: Tensor2::zeros(rows, cols),
            v: Tensor2::zeros(rows, cols),
        }
    }

    /// Uniform Glorot initialization over the tensor's fan-in/fan-out.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut p = Param::zeros(rows, cols);
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        for v in p.value.data_mut() {
            *v = rng.gen_range(-limit..limit);
        }
        p
    }

    pub fn from_tensor(value: Tensor2) -> Self {
        let (r, c) = (value.rows(), value.cols());
        Param {
            value,
            grad: Tensor2::zeros(r, c),
            m: Tensor2::zeros(r, c),
            v: Tensor2::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Visitor access to every named parameter of a model, in a stable order.
///
/// The order must be deterministic and identical between `visit` and
/// `visit_mut`: checkpoints, Adam sweeps, and finite-difference checks all
/// walk parameters through this trait.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.value.data().len());
        n
    }

    /// Flat copy of all parameter values in visit order.
    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, p| out.extend_from_slice(p.value.data()));
        out
    }
}

/// Adam optimizer with a step-indexed learning-rate decay
/// `lr_k = lr / (1 + decay * k)` and bias-corrected moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl Adam {
    pub fn new(lr: f64, decay: f64) -> Self {
        Adam {
            lr,
            decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    /// One update over every parameter of `model`; gradients are zeroed
    /// after they are consumed.
    pub fn update<M: Parameterized + ?Sized>(&mut self, model: &mut M) {
        self.step += 1;
        let k = self.step;
        let lr_k = self.lr / (1.0 + self.decay * k as f64);
        let bc1 = 1.0 - self.beta1.powi(k as i32);
        let bc2 = 1.0 - self.beta2.powi(k as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        model.visit_mut(&mut |_, p| {
            let g = p.grad.data();
            let m = p.m.data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
            }
            let v = p.v.data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            }
            let m = p.m.data().to_vec();
            let v = p.v.data().to_vec();
            for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(&m).zip(&v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *w -= lr_k * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Param);
    impl Parameterized for Scalar {
        fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
            f("theta", &self.0);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
            f("theta", &mut self.0);
        }
    }

    #[test]
    fn zero_gradient_is_identity_on_fresh_params() {
        let mut s = Scalar(Param::from_tensor(Tensor2::from_row(&[0.25, -1.5])));
        let before = s.0.value.clone();
        let mut opt = Adam::new(5e-4, 1e-4);
        opt.update(&mut s);
        assert_eq!(s.0.value, before);
    }

    #[test]
    fn first_step_matches_reference_adam() {
        // step 1, theta = 0, g = 1: m_hat = v_hat = 1, update = -lr_1 / (1 + eps)
        let mut s = Scalar(Param::zeros(1, 1));
        s.0.grad.set(0, 0, 1.0);
        let mut opt = Adam::new(5e-4, 1e-4);
        opt.update(&mut s);
        let lr1 = 5e-4 / (1.0 + 1e-4);
        let expect = -lr1 / (1.0 + 1e-8);
        assert!((s.0.value.get(0, 0) - expect).abs() < 1e-15);
        assert!((s.0.value.get(0, 0) + 5e-4).abs() < 1e-6, "close to -lr at step 1");
        // gradients are consumed
        assert_eq!(s.0.grad.get(0, 0), 0.0);
    }

    #[test]
    fn repeated_identical_gradients_move_monotonically() {
        let mut s = Scalar(Param::zeros(1, 1));
        let mut opt = Adam::new(1e-3, 0.0);
        let mut last = 0.0;
        for _ in 0..5 {
            s.0.grad.set(0, 0, 2.0);
            opt.update(&mut s);
            let now = s.0.value.get(0, 0);
            assert!(now < last, "positive gradient must keep decreasing theta");
            last = now;
        }
    }
}
