use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};
use crate::tensor::{add_vec, Tensor2};

use super::param::{Param, Parameterized};

/// Fully connected layer `y = x W + b`, applied row-wise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    name: String,
}

/// Activations stashed by one forward call for its matching backward call.
#[derive(Debug)]
pub struct DenseCache {
    x: Tensor2,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: Param::glorot(in_dim, out_dim, rng),
            b: Param::zeros(1, out_dim),
            name: name.to_string(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, DenseCache)> {
        if x.cols() != self.in_dim() {
            return Err(KpgError::dim(
                &self.name,
                format!("input width {} != expected {}", x.cols(), self.in_dim()),
            ));
        }
        let mut y = x.matmul(&self.w.value);
        for i in 0..y.rows() {
            add_vec(y.row_mut(i), self.b.value.row(0));
        }
        Ok((y, DenseCache { x: x.clone() }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DenseCache, dy: &Tensor2) -> Tensor2 {
        self.w.grad.add_assign(&cache.x.matmul_tn(dy));
        add_vec(self.b.grad.row_mut(0), &dy.col_sums());
        dy.matmul_nt(&self.w.value)
    }
}

impl Parameterized for Dense {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        f(&format!("{}.w", self.name), &self.w);
        f(&format!("{}.b", self.name), &self.b);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let n = self.name.clone();
        f(&format!("{n}.w"), &mut self.w);
        f(&format!("{n}.b"), &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("fc", 2, 2, &mut rng);
        d.w.value = Tensor2::identity(2);
        d.b.value = Tensor2::zeros(1, 2);
        let (y, _) = d.forward(&Tensor2::from_row(&[1.0, 2.0])).unwrap();
        assert_eq!(y.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn zero_weights_yield_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("fc", 2, 2, &mut rng);
        d.w.value = Tensor2::zeros(2, 2);
        d.b.value = Tensor2::from_row(&[3.0, 3.0]);
        let (y, _) = d.forward(&Tensor2::from_row(&[5.0, 7.0])).unwrap();
        assert_eq!(y.row(0), &[3.0, 3.0]);
    }

    #[test]
    fn matches_naive_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = Dense::new("fc", 3, 4, &mut rng);
        let mut x = Tensor2::zeros(2, 3);
        for v in x.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let (y, _) = d.forward(&x).unwrap();
        // naive triple-loop oracle
        for i in 0..2 {
            for j in 0..4 {
                let mut s = d.b.value.get(0, j);
                for k in 0..3 {
                    s += x.get(i, k) * d.w.value.get(k, j);
                }
                assert!((y.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_names_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new("scorer", 3, 1, &mut rng);
        let err = d.forward(&Tensor2::zeros(1, 2)).unwrap_err();
        assert!(err.to_string().contains("scorer"));
    }
}
