//! Ending node selector: scores candidate nodes against the encoded key
//! graph, applies selections, and turns classifier feedback into rewards
//! and losses.

pub mod state;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::GraphScorer;
use crate::error::{KpgError, Result};
use crate::neural::{
    cross_entropy, softmax, softmax_ce_grad, Dense, DenseCache, GcnCache, GcnLayer, Param,
    Parameterized,
};
use crate::tensor::Tensor2;

pub use state::{CandidateGraph, KeyGraphState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateTag {
    Local,
    Global,
}

/// Scored candidate set for one step.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub candidates: Vec<usize>,
    pub probs: Vec<f64>,
    pub tag: CandidateTag,
}

/// Which reading of the step loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsLossVariant {
    /// Reward-scaled classification cross-entropy on a pooled head, plus an
    /// advantage-weighted policy-gradient term for the scorer.
    HeadWithAdvantage,
    /// Literal reward-scaled negative log-likelihood of the chosen action.
    ActionNll,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsModel {
    gcn: GcnLayer,
    scorer: Dense,
    head: Dense,
}

pub struct EncodeCache {
    gcn: GcnCache,
}

pub struct ActionCache {
    dense: DenseCache,
    probs: Vec<f64>,
    /// Member index (into the pre-action key graph) of each candidate's
    /// parent, when that parent was selected.
    parent_member: Vec<Option<usize>>,
    n_prev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsLossParts {
    pub ce: f64,
    pub policy: f64,
    pub total: f64,
}

/// Local candidates: children (in the candidate graph) of selected nodes
/// that are not themselves selected, ascending by id.
pub fn local_candidates(state: &KeyGraphState, graph: &CandidateGraph) -> Vec<usize> {
    let mut out: Vec<usize> = state
        .members()
        .iter()
        .flat_map(|&m| graph.children(m).iter().copied())
        .filter(|&v| !state.contains(v))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Global candidates: every candidate-graph node not yet selected,
/// ascending by id.
pub fn global_candidates(state: &KeyGraphState, graph: &CandidateGraph) -> Vec<usize> {
    (0..graph.len()).filter(|&v| !state.contains(v)).collect()
}

/// The epsilon trade-off: local with probability `epsilon`, global
/// otherwise; falls back to the other set when the chosen one is empty.
/// Returns an empty set only when both are empty.
pub fn build_candidate_set(
    state: &KeyGraphState,
    graph: &CandidateGraph,
    epsilon: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, CandidateTag) {
    let take_local = rng.gen_range(0.0..1.0) < epsilon;
    let (first, first_tag, second, second_tag) = if take_local {
        (
            local_candidates(state, graph),
            CandidateTag::Local,
            global_candidates(state, graph),
            CandidateTag::Global,
        )
    } else {
        (
            global_candidates(state, graph),
            CandidateTag::Global,
            local_candidates(state, graph),
            CandidateTag::Local,
        )
    };
    if !first.is_empty() {
        (first, first_tag)
    } else if !second.is_empty() {
        (second, second_tag)
    } else {
        (Vec::new(), first_tag)
    }
}

impl EnsModel {
    pub fn new(feat_dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        EnsModel {
            gcn: GcnLayer::new("ens.gcn", feat_dim, hidden, rng),
            scorer: Dense::new("ens.scorer", feat_dim + hidden, 1, rng),
            head: Dense::new("ens.head", hidden, classes, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gcn.out_dim()
    }

    pub fn feat_dim(&self) -> usize {
        self.gcn.in_dim()
    }

    /// GCN embedding of the key graph, one row per member.
    pub fn encode_keygraph(&self, state: &KeyGraphState) -> Result<(Tensor2, EncodeCache)> {
        let view = state.view();
        let (h, gcn) = self.gcn.forward(&view.a_td, &view.x)?;
        Ok((h, EncodeCache { gcn }))
    }

    /// Scores candidates: each candidate's feature row is concatenated with
    /// its parent's key-graph embedding (zeros when the parent is not
    /// selected), passed through the scoring layer and a softmax.
    pub fn action_distribution(
        &self,
        state: &KeyGraphState,
        embeddings: &Tensor2,
        candidates: &[usize],
        graph: &CandidateGraph,
    ) -> Result<(ActionDistribution, ActionCache)> {
        if candidates.is_empty() {
            return Err(KpgError::Input(
                "action_distribution: empty candidate set".into(),
            ));
        }
        let h = self.hidden();
        let d = graph.feat_dim();
        let mut x = Tensor2::zeros(candidates.len(), d + h);
        let mut parent_member = Vec::with_capacity(candidates.len());
        for (k, &v) in candidates.iter().enumerate() {
            let row = x.row_mut(k);
            row[..d].copy_from_slice(graph.feature_row(v));
            let pm = graph.parent(v).and_then(|p| state.member_index(p));
            if let Some(mi) = pm {
                row[d..].copy_from_slice(embeddings.row(mi));
            }
            parent_member.push(pm);
        }
        let (scores, dense) = self.scorer.forward(&x)?;
        let flat: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, 0)).collect();
        let probs = softmax(&flat);
        Ok((
            ActionDistribution {
                candidates: candidates.to_vec(),
                probs: probs.clone(),
                tag: CandidateTag::Local,
            },
            ActionCache {
                dense,
                probs,
                parent_member,
                n_prev: state.node_count(),
            },
        ))
    }

    /// Class probabilities of the pooled classification head over a state.
    pub fn head_probs(&self, state: &KeyGraphState) -> Result<Vec<f64>> {
        let (h, _) = self.encode_keygraph(state)?;
        let pooled = Tensor2::from_row(&h.mean_row());
        let (logits, _) = self.head.forward(&pooled)?;
        Ok(softmax(logits.row(0)))
    }

    /// Step loss with gradient accumulation.
    ///
    /// `HeadWithAdvantage`: `penalty * reward * CE(head(g_{t+1}), y)` plus
    /// `pg_weight * max(0, 1 - penalty*reward) * (-ln p[chosen])`.
    /// `ActionNll`: `penalty * reward * (-ln p[chosen])`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_ens(
        &mut self,
        state_after: &KeyGraphState,
        encode_prev: &EncodeCache,
        action: &ActionCache,
        chosen: usize,
        reward: f64,
        penalty: f64,
        label: usize,
        variant: EnsLossVariant,
        pg_weight: f64,
    ) -> Result<EnsLossParts> {
        let rw = penalty * reward;
        let (ce, policy) = match variant {
            EnsLossVariant::HeadWithAdvantage => {
                let ce = self.backward_head(state_after, label, rw)?;
                let advantage = (1.0 - rw).max(0.0);
                let coeff = pg_weight * advantage;
                let policy = coeff * -(action.probs[chosen].max(crate::neural::PROB_FLOOR)).ln();
                if coeff != 0.0 {
                    self.backward_policy(encode_prev, action, chosen, coeff);
                }
                (ce, policy)
            }
            EnsLossVariant::ActionNll => {
                let policy = rw * -(action.probs[chosen].max(crate::neural::PROB_FLOOR)).ln();
                self.backward_policy(encode_prev, action, chosen, rw);
                (0.0, policy)
            }
        };
        Ok(EnsLossParts {
            ce: rw * ce,
            policy,
            total: rw * ce + policy,
        })
    }

    /// Forward + backward of the pooled classification head on
    /// `state_after`, scaled by `coeff`. Returns the unscaled CE.
    fn backward_head(&mut self, state_after: &KeyGraphState, label: usize, coeff: f64) -> Result<f64> {
        let view = state_after.view();
        let (h, gcn_cache) = self.gcn.forward(&view.a_td, &view.x)?;
        let pooled = Tensor2::from_row(&h.mean_row());
        let (logits, head_cache) = self.head.forward(&pooled)?;
        let probs = softmax(logits.row(0));
        let ce = cross_entropy(&probs, label)?;
        let d_logits = softmax_ce_grad(&probs, label, coeff);
        let d_pooled = self.head.backward(&head_cache, &Tensor2::from_row(&d_logits));
        let n = h.rows();
        let mut dh = Tensor2::zeros(n, h.cols());
        let inv = 1.0 / n as f64;
        for i in 0..n {
            for (slot, &g) in dh.row_mut(i).iter_mut().zip(d_pooled.row(0)) {
                *slot = g * inv;
            }
        }
        self.gcn.backward(&gcn_cache, &dh);
        Ok(ce)
    }

    /// Backward of `coeff * (-ln p[chosen])` through the scorer and, via
    /// the parent-embedding augmentation, the key-graph GCN.
    fn backward_policy(
        &mut self,
        encode_prev: &EncodeCache,
        action: &ActionCache,
        chosen: usize,
        coeff: f64,
    ) {
        let d_scores_flat = softmax_ce_grad(&action.probs, chosen, coeff);
        let k = d_scores_flat.len();
        let mut d_scores = Tensor2::zeros(k, 1);
        for (i, &g) in d_scores_flat.iter().enumerate() {
            d_scores.set(i, 0, g);
        }
        let dx = self.scorer.backward(&action.dense, &d_scores);
        let h = self.hidden();
        let d = dx.cols() - h;
        let mut dh_prev = Tensor2::zeros(action.n_prev, h);
        for (row, pm) in action.parent_member.iter().enumerate() {
            if let Some(mi) = pm {
                for (slot, &g) in dh_prev.row_mut(*mi).iter_mut().zip(&dx.row(row)[d..]) {
                    *slot += g;
                }
            }
        }
        self.gcn.backward(&encode_prev.gcn, &dh_prev);
    }
}

impl Parameterized for EnsModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.gcn.visit(f);
        self.scorer.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.gcn.visit_mut(f);
        self.scorer.visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Samples an index into `dist.candidates` during training; takes the
/// argmax (ties toward the lowest node id) at inference.
pub fn select_action(dist: &ActionDistribution, training: bool, rng: &mut impl Rng) -> usize {
    if training {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (i, &p) in dist.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        dist.probs.len() - 1
    } else {
        let mut best = 0;
        for (i, &p) in dist.probs.iter().enumerate() {
            if p > dist.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Rollout-blended score of `state_after`: half the immediate true-class
/// score, half the mean over up to `l` greedy lookahead graphs (the first
/// being `state_after` itself). Lookahead prefers local candidates, never
/// invokes generation, and discards its graphs.
pub fn rollout_score(
    ens: &EnsModel,
    scorer: &dyn GraphScorer,
    state_after: &KeyGraphState,
    graph: &CandidateGraph,
    l: usize,
    label: usize,
) -> Result<f64> {
    let immediate = scorer.true_class_score(&state_after.view(), label)?;
    let mut scores = vec![immediate];
    let mut sim = state_after.clone();
    for _ in 1..l.max(1) {
        let mut cands = local_candidates(&sim, graph);
        if cands.is_empty() {
            cands = global_candidates(&sim, graph);
        }
        if cands.is_empty() {
            break;
        }
        let (h, _) = ens.encode_keygraph(&sim)?;
        let (dist, _) = ens.action_distribution(&sim, &h, &cands, graph)?;
        let mut best = 0;
        for (i, &p) in dist.probs.iter().enumerate() {
            if p > dist.probs[best] {
                best = i;
            }
        }
        sim.apply_action(dist.candidates[best], graph)?;
        scores.push(scorer.true_class_score(&sim.view(), label)?);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(0.5 * (immediate + mean))
}

/// Margin reward: `exp(-(r_next - r_prev))`, below 1 exactly when the
/// blended score improved.
pub fn reward_ens(r_next: f64, r_prev: f64) -> f64 {
    (-(r_next - r_prev)).exp()
}

/// Penalty reward `1.5 - f(g_{t+1})[y]`, at least 1 when the true-class
/// score drops below 0.5.
pub fn penalty_ens(scorer: &dyn GraphScorer, state_after: &KeyGraphState, label: usize) -> Result<f64> {
    Ok(1.5 - scorer.true_class_score(&state_after.view(), label)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::GraphView;
    use crate::data::tree::Post;
    use crate::data::PropagationTree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_tree(shape: &[(usize, usize)], n: usize) -> CandidateGraph {
        let mut posts = vec![Post {
            id: "n0".into(),
            parent_id: None,
            time_offset_min: 0.0,
            raw_text: String::new(),
            tokens: vec![],
        }];
        for v in 1..n {
            let parent = shape
                .iter()
                .find(|&&(_, c)| c == v)
                .map(|&(p, _)| p)
                .unwrap();
            posts.push(Post {
                id: format!("n{v}"),
                parent_id: Some(format!("n{parent}")),
                time_offset_min: v as f64,
                raw_text: String::new(),
                tokens: vec![],
            });
        }
        let mut tree = PropagationTree::from_posts("e", 0, posts).unwrap();
        let mut x = Tensor2::zeros(0, 0);
        for i in 0..n {
            x.push_row(&[i as f64 + 1.0, 0.5]);
        }
        tree.features = x;
        CandidateGraph::from_tree(&tree).unwrap()
    }

    #[test]
    fn candidate_sets_match_enumerated_example_one() {
        // tree r->{1,2}, 1->{3}; key graph {r, 1} => C' = {2,3}, C'' = {2,3}
        let g = chain_tree(&[(0, 1), (0, 2), (1, 3)], 4);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        assert_eq!(local_candidates(&s, &g), vec![2, 3]);
        assert_eq!(global_candidates(&s, &g), vec![2, 3]);
    }

    #[test]
    fn candidate_sets_match_enumerated_example_two() {
        // tree r->{1,2}, 2->{3}; key graph {r, 1} => C' = {2}, C'' = {2,3}
        let g = chain_tree(&[(0, 1), (0, 2), (2, 3)], 4);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        assert_eq!(local_candidates(&s, &g), vec![2]);
        assert_eq!(global_candidates(&s, &g), vec![2, 3]);
    }

    #[test]
    fn epsilon_one_always_local_until_empty() {
        let g = chain_tree(&[(0, 1), (0, 2), (2, 3)], 4);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (c, tag) = build_candidate_set(&s, &g, 1.0, &mut rng);
        assert_eq!(tag, CandidateTag::Local);
        assert_eq!(c, vec![2]);
    }

    #[test]
    fn empty_chosen_set_falls_back() {
        // after selecting everything reachable locally, local is empty but
        // global still has node 3 (parent unselected is impossible in a
        // tree; craft by selecting 1's subtree first)
        let g = chain_tree(&[(0, 1), (1, 2), (1, 3)], 4);
        let s = KeyGraphState::initial(&g);
        // key graph = {0}; local = {1}; choose global branch explicitly
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, tag) = build_candidate_set(&s, &g, 0.0, &mut rng);
        assert_eq!(tag, CandidateTag::Global);
        assert_eq!(c, vec![1, 2, 3]);
    }

    #[test]
    fn single_candidate_gets_probability_one() {
        let g = chain_tree(&[(0, 1)], 2);
        let s = KeyGraphState::initial(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let (h, _) = ens.encode_keygraph(&s).unwrap();
        let (dist, _) = ens.action_distribution(&s, &h, &[1], &g).unwrap();
        assert_eq!(dist.probs, vec![1.0]);
    }

    #[test]
    fn zero_scorer_gives_uniform_distribution() {
        let g = chain_tree(&[(0, 1), (0, 2), (0, 3)], 4);
        let s = KeyGraphState::initial(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ens = EnsModel::new(2, 3, 2, &mut rng);
        ens.scorer.w.value.fill(0.0);
        ens.scorer.b.value.fill(0.0);
        let (h, _) = ens.encode_keygraph(&s).unwrap();
        let (dist, _) = ens.action_distribution(&s, &h, &[1, 2, 3], &g).unwrap();
        for &p in &dist.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unselected_parent_gets_zero_padding() {
        let g = chain_tree(&[(0, 1), (1, 2)], 3);
        let s = KeyGraphState::initial(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let (h, _) = ens.encode_keygraph(&s).unwrap();
        // candidate 2's parent (1) is not in the key graph
        let (_, cache) = ens.action_distribution(&s, &h, &[2], &g).unwrap();
        assert_eq!(cache.parent_member, vec![None]);
    }

    struct ScriptedScorer {
        scores: std::cell::RefCell<Vec<f64>>,
    }
    impl GraphScorer for ScriptedScorer {
        fn class_probs(&self, _g: &GraphView) -> crate::error::Result<Vec<f64>> {
            let s = self.scores.borrow_mut().remove(0);
            Ok(vec![s, 1.0 - s])
        }
    }

    #[test]
    fn rollout_collapses_at_l_one() {
        let g = chain_tree(&[(0, 1), (0, 2)], 3);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let f = ScriptedScorer {
            scores: std::cell::RefCell::new(vec![0.7]),
        };
        let r = rollout_score(&ens, &f, &s, &g, 1, 0).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rollout_arithmetic_matches_worked_example() {
        // l = 2: immediate 0.7, one lookahead graph scoring 0.8
        // => 0.5 * (0.7 + (0.7 + 0.8) / 2) = 0.725
        let g = chain_tree(&[(0, 1), (0, 2)], 3);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let f = ScriptedScorer {
            scores: std::cell::RefCell::new(vec![0.7, 0.8]),
        };
        let r = rollout_score(&ens, &f, &s, &g, 2, 0).unwrap();
        assert!((r - 0.725).abs() < 1e-12);
    }

    #[test]
    fn rollout_truncates_when_candidates_exhaust() {
        // key graph already holds every node: k = 1
        let g = chain_tree(&[(0, 1)], 2);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let f = ScriptedScorer {
            scores: std::cell::RefCell::new(vec![0.6]),
        };
        let r = rollout_score(&ens, &f, &s, &g, 5, 0).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rollout_does_not_mutate_state_or_pool() {
        let g = chain_tree(&[(0, 1), (0, 2), (1, 3)], 4);
        let mut s = KeyGraphState::initial(&g);
        s.apply_action(1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ens = EnsModel::new(2, 3, 2, &mut rng);
        let f = ScriptedScorer {
            scores: std::cell::RefCell::new(vec![0.5; 10]),
        };
        let (hs, hg) = (s.state_hash(), g.state_hash());
        rollout_score(&ens, &f, &s, &g, 3, 0).unwrap();
        assert_eq!(hs, s.state_hash());
        assert_eq!(hg, g.state_hash());
    }

    #[test]
    fn reward_formulas_match_closed_forms() {
        assert!((reward_ens(0.8, 0.6) - (-0.2f64).exp()).abs() < 1e-12);
        assert!((reward_ens(0.8, 0.6) - 0.818731).abs() < 1e-6);
        assert!((reward_ens(0.5, 0.5) - 1.0).abs() < 1e-12);
        assert!((reward_ens(0.4, 0.9) - 0.5f64.exp()).abs() < 1e-12);
        assert!((reward_ens(0.4, 0.9) - 1.648721).abs() < 1e-6);
    }

    struct ConstScorer(f64);
    impl GraphScorer for ConstScorer {
        fn class_probs(&self, _g: &GraphView) -> crate::error::Result<Vec<f64>> {
            Ok(vec![self.0, 1.0 - self.0])
        }
    }

    #[test]
    fn penalty_matches_closed_form() {
        let g = chain_tree(&[(0, 1)], 2);
        let s = KeyGraphState::initial(&g);
        for (score, expect) in [(0.5, 1.0), (1.0, 0.5), (0.2, 1.3)] {
            let p = penalty_ens(&ConstScorer(score), &s, 0).unwrap();
            assert!((p - expect).abs() < 1e-12, "score {score}: {p} vs {expect}");
        }
    }

    #[test]
    fn neutral_reward_drops_the_advantage_term() {
        let g = chain_tree(&[(0, 1), (0, 2)], 3);
        let mut s = KeyGraphState::initial(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ens = EnsModel::new(2, 3, 2, &mut rng);
        let (h, ec) = ens.encode_keygraph(&s).unwrap();
        let (dist, ac) = ens.action_distribution(&s, &h, &[1, 2], &g).unwrap();
        let chosen = 0usize;
        s.apply_action(dist.candidates[chosen], &g).unwrap();
        let parts = ens
            .loss_ens(&s, &ec, &ac, chosen, 1.0, 1.0, 0, EnsLossVariant::HeadWithAdvantage, 1.0)
            .unwrap();
        assert_eq!(parts.policy, 0.0);
        assert!((parts.total - parts.ce).abs() < 1e-15);
    }
}
