use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};
use crate::tensor::Tensor2;

use super::param::{Param, Parameterized};

/// Graph convolution `h = ReLU(a_norm · x · W)`.
///
/// `a_norm` carries the graph; the layer only owns `W`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcnLayer {
    pub w: Param,
    name: String,
}

pub struct GcnCache {
    a_norm: Tensor2,
    /// `a_norm · x`, the aggregated input.
    agg: Tensor2,
    /// Pre-activation `agg · W` for the ReLU mask.
    pre: Tensor2,
}

impl GcnLayer {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        GcnLayer {
            w: Param::glorot(in_dim, out_dim, rng),
            name: name.to_string(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, a_norm: &Tensor2, x: &Tensor2) -> Result<(Tensor2, GcnCache)> {
        if a_norm.rows() != a_norm.cols() {
            return Err(KpgError::dim(
                &self.name,
                format!("adjacency must be square, got {}x{}", a_norm.rows(), a_norm.cols()),
            ));
        }
        if a_norm.cols() != x.rows() {
            return Err(KpgError::dim(
                &self.name,
                format!("adjacency order {} != node count {}", a_norm.cols(), x.rows()),
            ));
        }
        if x.cols() != self.in_dim() {
            return Err(KpgError::dim(
                &self.name,
                format!("feature width {} != expected {}", x.cols(), self.in_dim()),
            ));
        }
        let agg = a_norm.matmul(x);
        let pre = agg.matmul(&self.w.value);
        let mut h = pre.clone();
        for v in h.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok((
            h,
            GcnCache {
                a_norm: a_norm.clone(),
                agg,
                pre,
            },
        ))
    }

    /// Returns the gradient with respect to `x`.
    pub fn backward(&mut self, cache: &GcnCache, dh: &Tensor2) -> Tensor2 {
        let mut ds = dh.clone();
        for (g, &p) in ds.data_mut().iter_mut().zip(cache.pre.data()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        self.w.grad.add_assign(&cache.agg.matmul_tn(&ds));
        let d_agg = ds.matmul_nt(&self.w.value);
        cache.a_norm.matmul_tn(&d_agg)
    }
}

impl Parameterized for GcnLayer {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        f(&format!("{}.w", self.name), &self.w);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let n = self.name.clone();
        f(&format!("{n}.w"), &mut self.w);
    }
}

/// Normalized adjacency with self-loops for a directed edge list.
///
/// Messages flow along edge direction: for an edge `(u, v)` node `v`
/// aggregates from `u`. With `B = A^T + I` (so `B[v][u] = 1`), the result is
/// `D^{-1/2} B D^{-1/2}` where `D[v] = 1 + in_degree(v)` is the row sum of
/// `B`. For a two-node path `0 -> 1` this yields `[[1, 0], [1/sqrt(2), 1/2]]`.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Tensor2 {
    let mut deg = vec![1.0f64; n];
    for &(_, v) in edges {
        deg[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a = Tensor2::zeros(n, n);
    for i in 0..n {
        a.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for &(u, v) in edges {
        a.set(v, u, inv_sqrt[v] * inv_sqrt[u]);
    }
    a
}

/// The same edges with direction reversed, for bottom-up passes.
pub fn reversed(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    edges.iter().map(|&(u, v)| (v, u)).collect()
}
