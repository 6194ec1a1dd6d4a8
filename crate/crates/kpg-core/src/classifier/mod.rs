//! BiGCN event classifier: two-layer GCN stacks over both edge
//! orientations with root-feature enhancement, mean pooling, and a dense
//! softmax head.

pub mod metrics;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PropagationTree;
use crate::error::{KpgError, Result};
use crate::neural::{
    normalized_adjacency, reversed, softmax, softmax_ce_grad, Dense, GcnCache, GcnLayer, Param,
    Parameterized,
};
use crate::tensor::Tensor2;

pub use metrics::{evaluate_metrics, Metrics};
pub use train::{train_classifier, ClassifierTrainLog, TrainOpts};

/// A graph ready for classification: features, directed edges, and the
/// cached normalized adjacencies for both orientations. The root is node 0.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub x: Tensor2,
    pub edges: Vec<(usize, usize)>,
    pub a_td: Tensor2,
    pub a_bu: Tensor2,
}

impl GraphView {
    pub fn new(x: Tensor2, edges: Vec<(usize, usize)>) -> Self {
        let n = x.rows();
        let a_td = normalized_adjacency(n, &edges);
        let a_bu = normalized_adjacency(n, &reversed(&edges));
        GraphView { x, edges, a_td, a_bu }
    }

    pub fn from_tree(tree: &PropagationTree) -> Self {
        GraphView::new(tree.features.clone(), tree.edges.clone())
    }

    pub fn node_count(&self) -> usize {
        self.x.rows()
    }
}

/// Anything that can score a graph with class probabilities. The reward
/// oracle, the downstream classifier, and test stubs all implement this.
pub trait GraphScorer {
    fn class_probs(&self, g: &GraphView) -> Result<Vec<f64>>;

    fn true_class_score(&self, g: &GraphView, label: usize) -> Result<f64> {
        let p = self.class_probs(g)?;
        if label >= p.len() {
            return Err(KpgError::Input(format!(
                "label {label} out of range for {} classes",
                p.len()
            )));
        }
        Ok(p[label])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiGcn {
    td1: GcnLayer,
    td2: GcnLayer,
    bu1: GcnLayer,
    bu2: GcnLayer,
    head: Dense,
    classes: usize,
}

pub struct BiGcnCache {
    td: DirectionCache,
    bu: DirectionCache,
    head: crate::neural::DenseCache,
    probs: Vec<f64>,
    n: usize,
}

struct DirectionCache {
    c1: GcnCache,
    c2: GcnCache,
}

impl BiGcn {
    pub fn new(feat_dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        BiGcn {
            td1: GcnLayer::new("bigcn.td1", feat_dim, hidden, rng),
            td2: GcnLayer::new("bigcn.td2", hidden, hidden, rng),
            bu1: GcnLayer::new("bigcn.bu1", feat_dim, hidden, rng),
            bu2: GcnLayer::new("bigcn.bu2", hidden, hidden, rng),
            head: Dense::new("bigcn.head", 4 * hidden, classes, rng),
            classes,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feat_dim(&self) -> usize {
        self.td1.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.td1.out_dim()
    }

    /// One direction: two GCN layers, then the per-direction readout
    /// `mean(H2) || H1[root]` (the root-enhancement concatenation).
    fn direction(
        layer1: &GcnLayer,
        layer2: &GcnLayer,
        a: &Tensor2,
        x: &Tensor2,
    ) -> Result<(Vec<f64>, DirectionCache)> {
        let (h1, c1) = layer1.forward(a, x)?;
        let (h2, c2) = layer2.forward(a, &h1)?;
        let mut pooled = h2.mean_row();
        pooled.extend_from_slice(h1.row(0));
        Ok((pooled, DirectionCache { c1, c2 }))
    }

    pub fn forward(&self, g: &GraphView) -> Result<(Vec<f64>, BiGcnCache)> {
        if g.node_count() == 0 {
            return Err(KpgError::Input("bigcn: empty graph".into()));
        }
        if g.x.cols() != self.feat_dim() {
            return Err(KpgError::dim(
                "bigcn",
                format!("feature width {} != expected {}", g.x.cols(), self.feat_dim()),
            ));
        }
        let (p_td, td) = Self::direction(&self.td1, &self.td2, &g.a_td, &g.x)?;
        let (p_bu, bu) = Self::direction(&self.bu1, &self.bu2, &g.a_bu, &g.x)?;
        let mut pooled = p_td;
        pooled.extend_from_slice(&p_bu);
        let pooled = Tensor2::from_row(&pooled);
        let (logits, head) = self.head.forward(&pooled)?;
        let probs = softmax(logits.row(0));
        Ok((
            probs.clone(),
            BiGcnCache {
                td,
                bu,
                head,
                probs,
                n: g.node_count(),
            },
        ))
    }

    /// Accumulates gradients of `coeff * cross_entropy(probs, label)`.
    pub fn backward(&mut self, cache: &BiGcnCache, label: usize, coeff: f64) -> Result<()> {
        let d_logits = softmax_ce_grad(&cache.probs, label, coeff);
        let d_pooled = self
            .head
            .backward(&cache.head, &Tensor2::from_row(&d_logits));
        let h = self.hidden();
        let d = d_pooled.row(0);
        Self::direction_backward(&mut self.td1, &mut self.td2, &cache.td, &d[..2 * h], cache.n);
        Self::direction_backward(&mut self.bu1, &mut self.bu2, &cache.bu, &d[2 * h..], cache.n);
        Ok(())
    }

    fn direction_backward(
        layer1: &mut GcnLayer,
        layer2: &mut GcnLayer,
        cache: &DirectionCache,
        d_pooled: &[f64],
        n: usize,
    ) {
        let h = layer2.out_dim();
        let (d_mean, d_root) = d_pooled.split_at(h);
        let mut dh2 = Tensor2::zeros(n, h);
        let inv = 1.0 / n as f64;
        for i in 0..n {
            for (slot, &g) in dh2.row_mut(i).iter_mut().zip(d_mean) {
                *slot = g * inv;
            }
        }
        let mut dh1 = layer2.backward(&cache.c2, &dh2);
        for (slot, &g) in dh1.row_mut(0).iter_mut().zip(d_root) {
            *slot += g;
        }
        layer1.backward(&cache.c1, &dh1);
    }

    pub fn predict(&self, g: &GraphView) -> Result<usize> {
        let probs = self.class_probs(g)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

impl GraphScorer for BiGcn {
    fn class_probs(&self, g: &GraphView) -> Result<Vec<f64>> {
        Ok(self.forward(g)?.0)
    }
}

impl Parameterized for BiGcn {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.td1.visit(f);
        self.td2.visit(f);
        self.bu1.visit(f);
        self.bu2.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.td1.visit_mut(f);
        self.td2.visit_mut(f);
        self.bu1.visit_mut(f);
        self.bu2.visit_mut(f);
        self.head.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_view(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GraphView {
        let mut x = Tensor2::zeros(n, d);
        for v in x.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
        GraphView::new(x, edges)
    }

    #[test]
    fn root_only_graph_yields_valid_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = BiGcn::new(5, 4, 3, &mut rng);
        let g = GraphView::new(Tensor2::from_row(&[0.1, 0.2, 0.3, 0.4, 0.5]), vec![]);
        let p = model.class_probs(&g).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_head_gives_uniform_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = BiGcn::new(4, 3, 4, &mut rng);
        model.head.w.value.fill(0.0);
        model.head.b.value.fill(0.0);
        let g = toy_view(&mut rng, 5, 4);
        let p = model.class_probs(&g).unwrap();
        for &v in &p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_non_root_nodes_leaves_output_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = BiGcn::new(4, 3, 2, &mut rng);
        let g = toy_view(&mut rng, 6, 4);
        let p = model.class_probs(&g).unwrap();

        // permute non-root node storage order: rotate nodes 1..6
        let n = 6;
        let mut perm: Vec<usize> = (0..n).collect();
        perm[1..].rotate_left(2);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut px = Tensor2::zeros(n, 4);
        for old in 0..n {
            px.row_mut(inv[old]).copy_from_slice(g.x.row(old));
        }
        let pedges: Vec<(usize, usize)> = g.edges.iter().map(|&(u, v)| (inv[u], inv[v])).collect();
        let pg = GraphView::new(px, pedges);
        let pp = model.class_probs(&pg).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn feature_width_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = BiGcn::new(4, 3, 2, &mut rng);
        let g = toy_view(&mut rng, 3, 5);
        assert!(model.class_probs(&g).is_err());
    }
}
