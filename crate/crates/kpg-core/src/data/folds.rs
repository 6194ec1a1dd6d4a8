//! Stratified fold assignment and curriculum ordering.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};

use super::tree::PropagationTree;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// Fold index per tree, aligned with the input order.
    pub assignment: Vec<usize>,
    pub folds: usize,
    pub warnings: Vec<String>,
}

impl DatasetSplit {
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }
}

/// Stratified-by-label seeded split. Within each class, events are shuffled
/// and dealt round-robin, so per-class fold sizes differ by at most one.
pub fn split_folds(trees: &[PropagationTree], folds: usize, seed: u64) -> Result<DatasetSplit> {
    if folds < 2 {
        return Err(KpgError::Config(format!("folds must be >= 2, got {folds}")));
    }
    if trees.is_empty() {
        return Err(KpgError::Input("cannot split an empty dataset".into()));
    }
    let n_classes = trees.iter().map(|t| t.label).max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, t) in trees.iter().enumerate() {
        by_class[t.label].push(i);
    }
    let mut assignment = vec![0usize; trees.len()];
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (class, mut indices) in by_class.into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < folds {
            warnings.push(format!(
                "class {class} has only {} events for {folds} folds",
                indices.len()
            ));
        }
        indices.shuffle(&mut rng);
        for (k, idx) in indices.into_iter().enumerate() {
            assignment[idx] = k % folds;
        }
    }
    Ok(DatasetSplit {
        assignment,
        folds,
        warnings,
    })
}

/// Indices sorted by node count descending, ties by event id ascending.
pub fn curriculum_order(trees: &[PropagationTree]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trees.len()).collect();
    order.sort_by(|&a, &b| {
        trees[b]
            .node_count()
            .cmp(&trees[a].node_count())
            .then_with(|| trees[a].event_id.cmp(&trees[b].event_id))
    });
    order
}
