//! Event data model: a root post plus its comment/retweet tree.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};
use crate::neural::TokenId;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub parent_id: Option<String>,
    pub time_offset_min: f64,
    pub raw_text: String,
    /// Vocabulary ids, filled once a vocabulary is applied.
    #[serde(default)]
    pub tokens: Vec<TokenId>,
}

/// One event: label, posts in root-first topological order, and edges as
/// `(parent index, child index)` pairs. `features` is empty until a
/// vocabulary featurizes the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationTree {
    pub event_id: String,
    pub label: usize,
    pub posts: Vec<Post>,
    pub edges: Vec<(usize, usize)>,
    pub features: Tensor2,
}

/// Heap key for the deterministic topological order: among posts whose
/// parent is already placed, the smallest `(time_offset_min, id)` goes next.
#[derive(PartialEq)]
struct PendingPost {
    time: f64,
    id: String,
    idx: usize,
}

impl Eq for PendingPost {}

impl PartialOrd for PendingPost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PendingPost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PropagationTree {
    /// Validates and orders a raw post list into a tree.
    pub fn from_posts(event_id: &str, label: usize, raw: Vec<Post>) -> Result<Self> {
        if raw.is_empty() {
            return Err(KpgError::event(event_id, "no posts"));
        }
        let mut by_id: HashMap<&str, usize> = HashMap::new();
        for (i, p) in raw.iter().enumerate() {
            if by_id.insert(&p.id, i).is_some() {
                return Err(KpgError::event(event_id, format!("duplicate post id '{}'", p.id)));
            }
            if !p.time_offset_min.is_finite() || p.time_offset_min < 0.0 {
                return Err(KpgError::event(
                    event_id,
                    format!("post '{}' has invalid time offset {}", p.id, p.time_offset_min),
                ));
            }
        }

        let roots: Vec<usize> = raw
            .iter()
            .enumerate()
            .filter(|(_, p)| p.parent_id.is_none())
            .map(|(i, _)| i)
            .collect();
        if roots.len() != 1 {
            return Err(KpgError::event(
                event_id,
                format!("expected exactly one root post, found {}", roots.len()),
            ));
        }
        let root = roots[0];
        if raw[root].time_offset_min != 0.0 {
            return Err(KpgError::event(
                event_id,
                format!("root post must have time offset 0, got {}", raw[root].time_offset_min),
            ));
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
        for (i, p) in raw.iter().enumerate() {
            if let Some(pid) = &p.parent_id {
                match by_id.get(pid.as_str()) {
                    Some(&pi) => children[pi].push(i),
                    None => {
                        return Err(KpgError::event(
                            event_id,
                            format!("post '{}' references missing parent '{}'", p.id, pid),
                        ))
                    }
                }
            }
        }

        // Kahn's algorithm with a (time, id)-ordered frontier.
        let mut heap: BinaryHeap<Reverse<PendingPost>> = BinaryHeap::new();
        heap.push(Reverse(PendingPost {
            time: 0.0,
            id: raw[root].id.clone(),
            idx: root,
        }));
        let mut order = Vec::with_capacity(raw.len());
        let mut placed = vec![usize::MAX; raw.len()];
        while let Some(Reverse(next)) = heap.pop() {
            placed[next.idx] = order.len();
            order.push(next.idx);
            for &c in &children[next.idx] {
                heap.push(Reverse(PendingPost {
                    time: raw[c].time_offset_min,
                    id: raw[c].id.clone(),
                    idx: c,
                }));
            }
        }
        if order.len() != raw.len() {
            // unreached posts imply a parent cycle
            return Err(KpgError::event(event_id, "cycle detected among posts"));
        }

        let mut posts = Vec::with_capacity(raw.len());
        let mut old_to_new = vec![usize::MAX; raw.len()];
        for (new_idx, &old_idx) in order.iter().enumerate() {
            old_to_new[old_idx] = new_idx;
        }
        for &old_idx in &order {
            posts.push(raw[old_idx].clone());
        }
        let mut edges = Vec::with_capacity(raw.len().saturating_sub(1));
        for (new_idx, post) in posts.iter().enumerate() {
            if let Some(pid) = &post.parent_id {
                let old_parent = by_id[pid.as_str()];
                edges.push((old_to_new[old_parent], new_idx));
            }
        }

        Ok(PropagationTree {
            event_id: event_id.to_string(),
            label,
            posts,
            edges,
            features: Tensor2::zeros(0, 0),
        })
    }

    pub fn node_count(&self) -> usize {
        self.posts.len()
    }

    pub fn root(&self) -> &Post {
        &self.posts[0]
    }

    /// Structural re-check: directed tree rooted at index 0, every node
    /// reachable, edge count = node count - 1.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if n == 0 {
            return Err(KpgError::event(&self.event_id, "empty tree"));
        }
        if self.edges.len() != n - 1 {
            return Err(KpgError::event(
                &self.event_id,
                format!("edge count {} != node count - 1 ({})", self.edges.len(), n - 1),
            ));
        }
        let mut parent = vec![usize::MAX; n];
        for &(u, v) in &self.edges {
            if u >= n || v >= n || v == 0 {
                return Err(KpgError::event(&self.event_id, "edge endpoint out of range"));
            }
            if parent[v] != usize::MAX {
                return Err(KpgError::event(&self.event_id, format!("node {v} has two parents")));
            }
            parent[v] = u;
        }
        // reachability from the root
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in &self.edges {
            children[u].push(v);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &c in &children[u] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(KpgError::event(&self.event_id, "node unreachable from root"));
        }
        if self.features.rows() != 0 && self.features.rows() != n {
            return Err(KpgError::event(&self.event_id, "feature row count mismatch"));
        }
        Ok(())
    }

    /// Index of each node's parent; `None` for the root.
    pub fn parent_indices(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.node_count()];
        for &(u, v) in &self.edges {
            parents[v] = Some(u);
        }
        parents
    }
}
