use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor2;

use super::dense::{Dense, DenseCache};
use super::param::{Param, Parameterized};

/// Stacked dense layers with ReLU between them and a linear final layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

pub struct MlpCache {
    dense: Vec<DenseCache>,
    /// Pre-activation outputs of every non-final layer, for the ReLU mask.
    pre: Vec<Tensor2>,
}

impl Mlp {
    /// `widths` chains input through hidden layers to the output,
    /// e.g. `[in, hidden, out]`.
    pub fn new(name: &str, widths: &[usize], rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "mlp needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&format!("{name}.l{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        let mut cache = MlpCache {
            dense: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut y, dc) = layer.forward(&h)?;
            cache.dense.push(dc);
            if i < last {
                cache.pre.push(y.clone());
                for v in y.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = y;
        }
        Ok((h, cache))
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Tensor2) -> Tensor2 {
        let last = self.layers.len() - 1;
        let mut grad = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                let pre = &cache.pre[i];
                for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grad = self.layers[i].backward(&cache.dense[i], &grad);
        }
        grad
    }
}

impl Parameterized for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        for l in &self.layers {
            l.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}
