//! Optional bag-of-words text head and prediction fusion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{PropagationTree, Vocabulary};
use crate::error::{KpgError, Result};
use crate::neural::{cross_entropy, softmax, softmax_ce_grad, Adam, Dense, Param, Parameterized};
use crate::tensor::Tensor2;

/// Logistic classifier over the TF-IDF of an event's concatenated text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextHead {
    dense: Dense,
}

impl TextHead {
    pub fn new(feat_dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        TextHead {
            dense: Dense::new("text_head", feat_dim, classes, rng),
        }
    }

    fn event_row(tree: &PropagationTree, vocab: &Vocabulary) -> Vec<f64> {
        let mut all_tokens = Vec::new();
        for post in &tree.posts {
            all_tokens.extend(vocab.encode(&post.raw_text));
        }
        vocab.feature_row(&all_tokens)
    }

    pub fn event_probs(&self, tree: &PropagationTree, vocab: &Vocabulary) -> Result<Vec<f64>> {
        let row = Self::event_row(tree, vocab);
        let (logits, _) = self.dense.forward(&Tensor2::from_row(&row))?;
        Ok(softmax(logits.row(0)))
    }

    pub fn train(
        &mut self,
        trees: &[PropagationTree],
        vocab: &Vocabulary,
        config: &ExperimentConfig,
        seed: u64,
    ) -> Result<()> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let rows: Vec<Vec<f64>> = trees.iter().map(|t| Self::event_row(t, vocab)).collect();
        let labels: Vec<usize> = trees.iter().map(|t| t.label).collect();
        let mut opt = Adam::new(config.lr.max(1e-3), config.decay);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..trees.len()).collect();
        for _ in 0..60 {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch.max(1)) {
                self.dense.zero_grads();
                let coeff = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let x = Tensor2::from_row(&rows[i]);
                    let (logits, cache) = self.dense.forward(&x)?;
                    let probs = softmax(logits.row(0));
                    let _ = cross_entropy(&probs, labels[i])?;
                    let d = softmax_ce_grad(&probs, labels[i], coeff);
                    self.dense.backward(&cache, &Tensor2::from_row(&d));
                }
                opt.update(&mut self.dense);
            }
        }
        Ok(())
    }
}

impl Parameterized for TextHead {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.dense.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.dense.visit_mut(f);
    }
}

/// Elementwise mean of two distributions over the same classes,
/// renormalized.
pub fn fuse_predictions(p_graph: &[f64], p_text: &[f64]) -> Result<Vec<f64>> {
    if p_graph.len() != p_text.len() {
        return Err(KpgError::Input(format!(
            "fuse_predictions: {} classes vs {}",
            p_graph.len(),
            p_text.len()
        )));
    }
    let mut fused: Vec<f64> = p_graph
        .iter()
        .zip(p_text)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let sum: f64 = fused.iter().sum();
    if sum > 0.0 {
        for v in &mut fused {
            *v /= sum;
        }
    }
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_fuse_to_themselves() {
        let p = vec![0.2, 0.3, 0.5];
        let f = fuse_predictions(&p, &p).unwrap();
        for (a, b) in f.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_certainties_fuse_to_uniform() {
        let f = fuse_predictions(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(f, vec![0.5, 0.5]);
    }

    #[test]
    fn class_count_mismatch_is_error() {
        assert!(fuse_predictions(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn uniform_text_head_never_flips_graph_argmax() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let k = rng.gen_range(2..5);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let uniform = vec![1.0 / k as f64; k];
            let fused = fuse_predictions(&p, &uniform).unwrap();
            let argmax = |v: &[f64]| {
                let mut b = 0;
                for (i, &x) in v.iter().enumerate() {
                    if x > v[b] {
                        b = i;
                    }
                }
                b
            };
            assert_eq!(argmax(&p), argmax(&fused));
        }
    }
}
