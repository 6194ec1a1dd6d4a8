//! Mutable graph state for one generation episode: the candidate pool the
//! selector draws from, and the key graph it grows one node per step.

use sha2::{Digest, Sha256};

use crate::classifier::GraphView;
use crate::data::PropagationTree;
use crate::error::{KpgError, Result};
use crate::neural::TokenId;
use crate::tensor::Tensor2;

/// Node pool for one event: the original posts plus any generated
/// responses. Always a directed tree rooted at node 0.
#[derive(Debug, Clone)]
pub struct CandidateGraph {
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    features: Tensor2,
    token_seqs: Vec<Vec<TokenId>>,
    generated: Vec<bool>,
}

impl CandidateGraph {
    /// Requires a featurized tree (vocabulary applied).
    pub fn from_tree(tree: &PropagationTree) -> Result<Self> {
        if tree.features.rows() != tree.node_count() {
            return Err(KpgError::Input(format!(
                "event '{}' is not featurized",
                tree.event_id
            )));
        }
        let n = tree.node_count();
        let mut parents = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in &tree.edges {
            parents[v] = Some(u);
            children[u].push(v);
        }
        Ok(CandidateGraph {
            parents,
            children,
            features: tree.features.clone(),
            token_seqs: tree.posts.iter().map(|p| p.tokens.clone()).collect(),
            generated: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parents[v]
    }

    pub fn children(&self, u: usize) -> &[usize] {
        &self.children[u]
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        self.features.row(v)
    }

    pub fn tokens(&self, v: usize) -> &[TokenId] {
        &self.token_seqs[v]
    }

    pub fn is_generated(&self, v: usize) -> bool {
        self.generated[v]
    }

    pub fn generated_count(&self) -> usize {
        self.generated.iter().filter(|&&g| g).count()
    }

    /// Appends a generated response node attached to `context`.
    pub fn add_generated(
        &mut self,
        context: usize,
        tokens: Vec<TokenId>,
        feature_row: Vec<f64>,
    ) -> Result<usize> {
        if context >= self.len() {
            return Err(KpgError::Input(format!(
                "context node {context} out of range"
            )));
        }
        if feature_row.len() != self.feat_dim() {
            return Err(KpgError::dim(
                "candidate-graph",
                format!(
                    "generated feature width {} != {}",
                    feature_row.len(),
                    self.feat_dim()
                ),
            ));
        }
        let id = self.len();
        self.parents.push(Some(context));
        self.children.push(Vec::new());
        self.children[context].push(id);
        self.features.push_row(&feature_row);
        self.token_seqs.push(tokens);
        self.generated.push(true);
        Ok(id)
    }

    /// Structural re-check: single root at 0, acyclic, fully reachable.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(KpgError::Input("empty candidate graph".into()));
        }
        if self.parents[0].is_some() {
            return Err(KpgError::Input("node 0 must be the root".into()));
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0usize];
        let mut reached = 1usize;
        while let Some(u) = stack.pop() {
            for &c in &self.children[u] {
                if seen[c] {
                    return Err(KpgError::Input(format!("node {c} visited twice")));
                }
                seen[c] = true;
                reached += 1;
                stack.push(c);
            }
        }
        if reached != n {
            return Err(KpgError::Input("candidate graph not fully reachable".into()));
        }
        Ok(())
    }

    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        for (i, p) in self.parents.iter().enumerate() {
            h.update((i as u64).to_le_bytes());
            h.update((p.map_or(u64::MAX, |x| x as u64)).to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_le_bytes());
        }
        crate::checkpoint::hex(&h.finalize())
    }
}

/// The key propagation graph under construction. Node identity is the
/// candidate-graph id; row `i` of `features` belongs to `members[i]` and
/// `members[0]` is always the root.
#[derive(Debug, Clone)]
pub struct KeyGraphState {
    members: Vec<usize>,
    edges: Vec<(usize, usize)>,
    features: Tensor2,
    index_of: Vec<usize>,
    step: usize,
}

impl KeyGraphState {
    pub fn initial(graph: &CandidateGraph) -> Self {
        let mut features = Tensor2::zeros(0, 0);
        features.push_row(graph.feature_row(0));
        KeyGraphState {
            members: vec![0],
            edges: Vec::new(),
            features,
            index_of: vec![0],
            step: 0,
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.members.len()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn contains(&self, cand_id: usize) -> bool {
        cand_id < self.index_of.len() && self.index_of[cand_id] != usize::MAX
    }

    pub fn member_index(&self, cand_id: usize) -> Option<usize> {
        if self.contains(cand_id) {
            Some(self.index_of[cand_id])
        } else {
            None
        }
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    /// Adds `v` with its transition edge: the true parent when that parent
    /// is already selected, the root otherwise.
    pub fn apply_action(&mut self, v: usize, graph: &CandidateGraph) -> Result<()> {
        if v >= graph.len() {
            return Err(KpgError::Input(format!("action node {v} out of range")));
        }
        if self.contains(v) {
            return Err(KpgError::Input(format!(
                "action node {v} is already in the key graph"
            )));
        }
        let parent = match graph.parent(v) {
            Some(p) if self.contains(p) => p,
            _ => self.members[0],
        };
        if self.index_of.len() < graph.len() {
            self.index_of.resize(graph.len(), usize::MAX);
        }
        self.index_of[v] = self.members.len();
        self.members.push(v);
        self.edges.push((parent, v));
        self.features.push_row(graph.feature_row(v));
        self.step += 1;
        Ok(())
    }

    /// Compact classification view with the root at index 0.
    pub fn view(&self) -> GraphView {
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(u, v)| (self.index_of[u], self.index_of[v]))
            .collect();
        GraphView::new(self.features.clone(), edges)
    }

    /// Re-check of the one-node-per-step tree invariant.
    pub fn validate(&self, graph: &CandidateGraph) -> Result<()> {
        if self.members.is_empty() || self.members[0] != 0 {
            return Err(KpgError::Input("key graph must be rooted at node 0".into()));
        }
        if self.members.len() != self.step + 1 {
            return Err(KpgError::Input(format!(
                "key graph has {} nodes at step {}",
                self.members.len(),
                self.step
            )));
        }
        if self.edges.len() + 1 != self.members.len() {
            return Err(KpgError::Input("key graph edge count mismatch".into()));
        }
        if self.features.rows() != self.members.len() {
            return Err(KpgError::Input("key graph feature rows mismatch".into()));
        }
        for &m in &self.members {
            if m >= graph.len() {
                return Err(KpgError::Input("member outside candidate graph".into()));
            }
        }
        // tree check on compact indices
        let n = self.members.len();
        let mut parent = vec![usize::MAX; n];
        for &(u, v) in &self.edges {
            let (ui, vi) = (self.index_of[u], self.index_of[v]);
            if vi == 0 || parent[vi] != usize::MAX {
                return Err(KpgError::Input("key graph node with two parents".into()));
            }
            parent[vi] = ui;
        }
        for (vi, &p) in parent.iter().enumerate().skip(1) {
            if p == usize::MAX {
                return Err(KpgError::Input(format!("key graph node {vi} unattached")));
            }
        }
        // acyclic: walk each node up to the root
        for mut cur in 1..n {
            let mut hops = 0;
            while cur != 0 {
                cur = parent[cur];
                hops += 1;
                if hops > n {
                    return Err(KpgError::Input("cycle in key graph".into()));
                }
            }
        }
        Ok(())
    }

    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        for &m in &self.members {
            h.update((m as u64).to_le_bytes());
        }
        for &(u, v) in &self.edges {
            h.update((u as u64).to_le_bytes());
            h.update((v as u64).to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_le_bytes());
        }
        crate::checkpoint::hex(&h.finalize())
    }
}
