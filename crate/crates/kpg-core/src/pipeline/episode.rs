//! One generation episode: grow a key graph from the root, topping up the
//! candidate pool when it runs thin, optionally accumulating selector
//! losses from classifier-derived rewards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{BiGcn, GraphScorer};
use crate::config::ExperimentConfig;
use crate::crg::CrgModel;
use crate::data::{PropagationTree, Vocabulary};
use crate::ens::{
    build_candidate_set, global_candidates, local_candidates, penalty_ens, reward_ens,
    rollout_score, select_action, CandidateGraph, CandidateTag, EnsModel, KeyGraphState,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: usize,
    pub tag: CandidateTag,
    pub rollout: Option<f64>,
    pub reward: f64,
    pub penalty: f64,
    pub loss_ce: f64,
    pub loss_policy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub event_id: String,
    pub original_nodes: usize,
    pub final_nodes: usize,
    pub generated_nodes: usize,
    pub steps: Vec<StepRecord>,
}

pub struct EpisodeOutcome {
    pub state: KeyGraphState,
    pub graph: CandidateGraph,
    pub record: EpisodeRecord,
}

pub struct EpisodeSettings<'a> {
    pub config: &'a ExperimentConfig,
    pub max_steps: usize,
    pub training: bool,
    /// Accumulate selector gradients (training phase A).
    pub learn_ens: bool,
}

/// Runs one episode over `tree`. `reward_model` drives rollout and penalty
/// rewards; pass `None` at inference or when rewards are switched off.
pub fn run_episode(
    ens: &mut EnsModel,
    crg: Option<&CrgModel>,
    reward_model: Option<&BiGcn>,
    tree: &PropagationTree,
    vocab: &Vocabulary,
    settings: &EpisodeSettings,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome> {
    let cfg = settings.config;
    let mut graph = CandidateGraph::from_tree(tree)?;
    let mut state = KeyGraphState::initial(&graph);
    let mut record = EpisodeRecord {
        event_id: tree.event_id.clone(),
        original_nodes: tree.node_count(),
        final_nodes: 1,
        generated_nodes: 0,
        steps: Vec::new(),
    };
    let label = tree.label;
    let rewards_on = settings.learn_ens && reward_model.is_some();
    let mut r_prev = match (rewards_on, reward_model) {
        (true, Some(f)) => f.true_class_score(&state.view(), label)?,
        _ => 0.0,
    };

    for _ in 0..settings.max_steps {
        // candidate construction, with the uniform out-neighbor policy when
        // the selector is ablated
        let (mut cands, tag) = if cfg.no_ens {
            (local_candidates(&state, &graph), CandidateTag::Local)
        } else {
            build_candidate_set(&state, &graph, cfg.epsilon, rng)
        };

        // top up a thin candidate set, then rebuild the same set kind
        if cands.len() < cfg.gamma {
            if let Some(crg) = crg {
                let needed = cfg.gamma - cands.len();
                crg.generate_responses(&mut graph, &state, vocab, needed, cfg.max_text_len, rng)?;
                cands = match tag {
                    CandidateTag::Local => local_candidates(&state, &graph),
                    CandidateTag::Global => global_candidates(&state, &graph),
                };
            }
        }
        if cands.is_empty() && !cfg.no_ens {
            // fall back to the other set before stopping
            cands = match tag {
                CandidateTag::Local => global_candidates(&state, &graph),
                CandidateTag::Global => local_candidates(&state, &graph),
            };
        }
        if cands.is_empty() {
            break;
        }

        if cfg.no_ens {
            let idx = rng.gen_range(0..cands.len());
            state.apply_action(cands[idx], &graph)?;
            record.steps.push(StepRecord {
                action: cands[idx],
                tag,
                rollout: None,
                reward: 1.0,
                penalty: 1.0,
                loss_ce: 0.0,
                loss_policy: 0.0,
            });
            continue;
        }

        let (embeddings, enc_cache) = ens.encode_keygraph(&state)?;
        let (dist, act_cache) = ens.action_distribution(&state, &embeddings, &cands, &graph)?;
        let idx = select_action(&dist, settings.training, rng);
        let action = dist.candidates[idx];
        state.apply_action(action, &graph)?;

        let mut step = StepRecord {
            action,
            tag,
            rollout: None,
            reward: 1.0,
            penalty: 1.0,
            loss_ce: 0.0,
            loss_policy: 0.0,
        };
        if settings.learn_ens {
            if rewards_on {
                let f = reward_model.unwrap();
                let r_next =
                    rollout_score(ens, f, &state, &graph, cfg.rollout_len.max(1), label)?;
                step.reward = reward_ens(r_next, r_prev);
                step.penalty = penalty_ens(f, &state, label)?;
                step.rollout = Some(r_next);
                r_prev = r_next;
            }
            let parts = ens.loss_ens(
                &state,
                &enc_cache,
                &act_cache,
                idx,
                step.reward,
                step.penalty,
                label,
                cfg.ens_loss_variant(),
                cfg.pg_weight,
            )?;
            step.loss_ce = parts.ce;
            step.loss_policy = parts.policy;
        }
        record.steps.push(step);
    }

    record.final_nodes = state.node_count();
    record.generated_nodes = graph.generated_count();
    Ok(EpisodeOutcome {
        state,
        graph,
        record,
    })
}
