//! End-to-end orchestration: reward-classifier pre-training, alternating
//! selector/generator optimization over curriculum-ordered events, key-graph
//! inference, downstream classification, and cross-validated experiments.

pub mod episode;
pub mod report;
pub mod texthead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::param_hash;
use crate::classifier::{
    evaluate_metrics, train_classifier, BiGcn, GraphScorer, GraphView, Metrics,
};
use crate::config::ExperimentConfig;
use crate::crg::{harvest_pairs, reward_crg, standard_normal, CrgModel};
use crate::data::{curriculum_order, featurize_all, split_folds, PropagationTree, Vocabulary};
use crate::ens::EnsModel;
use crate::error::{KpgError, Result};
use crate::neural::{Adam, Parameterized};

pub use episode::{run_episode, EpisodeOutcome, EpisodeRecord, EpisodeSettings, StepRecord};
pub use report::{write_metrics, ExperimentError, MetricsFile};
pub use texthead::{fuse_predictions, TextHead};

/// Deterministic seed derivation for independent rng streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}

// stream tags for seed derivation
const TAG_REWARD_INIT: u64 = 1;
const TAG_REWARD_TRAIN: u64 = 2;
const TAG_MODELS: u64 = 3;
const TAG_EPISODE: u64 = 4;
const TAG_CRG_PHASE: u64 = 5;
const TAG_VAL: u64 = 6;
const TAG_CARVE: u64 = 7;
const TAG_DOWN_INIT: u64 = 8;
const TAG_DOWN_TRAIN: u64 = 9;
const TAG_INFER: u64 = 10;
const TAG_FOLD: u64 = 11;
const TAG_TEXT: u64 = 12;

/// Episode cap: `round(tau * median size)` in tau mode (0 stays 0),
/// `round(mean size)` in avg mode, at least 1 whenever nonzero.
pub fn max_steps(sizes: &[usize], tau_mode: &str, tau: f64) -> usize {
    assert!(!sizes.is_empty(), "max_steps needs a nonempty training fold");
    if tau_mode == "avg" {
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        (mean.round() as usize).max(1)
    } else {
        if tau == 0.0 {
            return 0;
        }
        let mut s: Vec<usize> = sizes.to_vec();
        s.sort_unstable();
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2] as f64
        } else {
            (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
        };
        ((tau * median).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct KpgModels {
    pub ens: EnsModel,
    pub crg: CrgModel,
}

impl KpgModels {
    pub fn new(feat_dim: usize, classes: usize, config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Self {
        KpgModels {
            ens: EnsModel::new(feat_dim, config.hidden, classes, rng),
            crg: CrgModel::new(feat_dim, config.hidden, config.z_dim, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub episodes: Vec<EpisodeRecord>,
    pub crg_loss: f64,
    pub crg_decoder_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainKpgLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Stratified boolean mask marking roughly `fraction` of each class.
fn stratified_carve(labels: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    use rand::seq::SliceRandom;
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut mask = vec![false; labels.len()];
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            continue;
        }
        idx.shuffle(rng);
        let take = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1);
        for &i in idx.iter().take(take) {
            mask[i] = true;
        }
    }
    mask
}

/// Alternating optimization: each epoch updates the selector over training
/// episodes (generator frozen), then the generator on pairs harvested from
/// the latest key graphs (selector frozen), then measures the frozen reward
/// classifier's accuracy on validation key graphs for early stopping.
pub fn train_kpg(
    trees: &[PropagationTree],
    reward_model: &BiGcn,
    models: &mut KpgModels,
    vocab: &Vocabulary,
    config: &ExperimentConfig,
    episode_cap: usize,
    fold_seed: u64,
) -> Result<TrainKpgLog> {
    let labels: Vec<usize> = trees.iter().map(|t| t.label).collect();
    let mut carve_rng = rng_for(&[fold_seed, TAG_CARVE]);
    let is_val = stratified_carve(&labels, config.val_fraction, &mut carve_rng);
    let train_idx: Vec<usize> = (0..trees.len()).filter(|&i| !is_val[i]).collect();
    let val_idx: Vec<usize> = (0..trees.len()).filter(|&i| is_val[i]).collect();

    // curriculum: largest events first
    let train_refs: Vec<PropagationTree> = train_idx.iter().map(|&i| trees[i].clone()).collect();
    let order = curriculum_order(&train_refs);
    let ordered: Vec<usize> = order.iter().map(|&k| train_idx[k]).collect();

    let rewards_off = config.no_reward || config.force_unit_rewards;
    let mut adam_ens = Adam::new(config.lr, config.decay);
    let mut adam_crg = Adam::new(config.lr, config.decay);

    let mut log = TrainKpgLog {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_val = f64::NEG_INFINITY;
    let mut best_models = models.clone();
    let mut stale = 0usize;

    for epoch in 0..config.kpg_epochs {
        let mut epoch_log = EpochLog {
            episodes: Vec::new(),
            crg_loss: 0.0,
            crg_decoder_loss: 0.0,
            val_accuracy: 0.0,
        };
        // phase A: update the selector, generator frozen
        let mut latest: Vec<Option<EpisodeOutcome>> = (0..trees.len()).map(|_| None).collect();
        for batch in ordered.chunks(config.batch.max(1)) {
            models.ens.zero_grads();
            for &i in batch {
                let settings = EpisodeSettings {
                    config,
                    max_steps: episode_cap,
                    training: true,
                    learn_ens: !config.no_ens,
                };
                let mut rng = rng_for(&[fold_seed, TAG_EPISODE, epoch as u64, i as u64]);
                let reward = (!rewards_off).then_some(reward_model);
                let out = run_episode(
                    &mut models.ens,
                    (!config.no_crg).then_some(&models.crg),
                    reward,
                    &trees[i],
                    vocab,
                    &settings,
                    &mut rng,
                )?;
                epoch_log.episodes.push(out.record.clone());
                latest[i] = Some(out);
            }
            if !config.no_ens {
                adam_ens.update(&mut models.ens);
            }
        }

        // phase B: update the generator on harvested pairs, selector frozen
        if !config.no_crg {
            for (b, batch) in ordered.chunks(config.batch.max(1)).enumerate() {
                models.crg.zero_grads();
                let mut rng = rng_for(&[fold_seed, TAG_CRG_PHASE, epoch as u64, b as u64]);
                let mut any = false;
                for &i in batch {
                    let Some(out) = &latest[i] else { continue };
                    let pairs = harvest_pairs(&out.state, &out.graph);
                    if pairs.is_empty() {
                        continue;
                    }
                    let reward = if rewards_off {
                        1.0
                    } else {
                        let reconstructed = models.crg.reconstructed_view(
                            &out.state,
                            &out.graph,
                            vocab,
                            config.max_text_len,
                            &mut rng,
                        )?;
                        reward_crg(reward_model, &out.state.view(), &reconstructed, trees[i].label)?
                    };
                    let noises: Vec<Vec<f64>> = pairs
                        .iter()
                        .map(|_| (0..config.z_dim).map(|_| standard_normal(&mut rng)).collect())
                        .collect();
                    let parts = models.crg.loss_crg(&pairs, &noises, reward)?;
                    epoch_log.crg_loss += parts.total;
                    epoch_log.crg_decoder_loss += models.crg.decoder_loss(&pairs, true)?;
                    any = true;
                }
                if any {
                    adam_crg.update(&mut models.crg);
                }
            }
        }

        // validation: frozen reward classifier on inference key graphs
        epoch_log.val_accuracy = if val_idx.is_empty() {
            0.0
        } else {
            let mut correct = 0usize;
            for &i in &val_idx {
                let settings = EpisodeSettings {
                    config,
                    max_steps: episode_cap,
                    training: false,
                    learn_ens: false,
                };
                let mut rng = rng_for(&[fold_seed, TAG_VAL, epoch as u64, i as u64]);
                let crg = (!config.no_crg).then_some(&models.crg);
                let out = run_episode(
                    &mut models.ens,
                    crg,
                    None,
                    &trees[i],
                    vocab,
                    &settings,
                    &mut rng,
                )?;
                let pred = reward_model.predict(&out.state.view())?;
                if pred == trees[i].label {
                    correct += 1;
                }
            }
            correct as f64 / val_idx.len() as f64
        };

        let val = epoch_log.val_accuracy;
        log.epochs.push(epoch_log);
        if val > best_val {
            best_val = val;
            best_models = models.clone();
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.kpg_patience {
                break;
            }
        }
    }
    *models = best_models;
    Ok(log)
}

/// Inference-mode key graphs (argmax actions) for a set of events.
pub fn generate_key_graphs(
    models: &mut KpgModels,
    trees: &[PropagationTree],
    vocab: &Vocabulary,
    config: &ExperimentConfig,
    episode_cap: usize,
    stream_seed: u64,
) -> Result<(Vec<GraphView>, u64)> {
    let mut views = Vec::with_capacity(trees.len());
    let mut steps = 0u64;
    for (i, tree) in trees.iter().enumerate() {
        let settings = EpisodeSettings {
            config,
            max_steps: episode_cap,
            training: false,
            learn_ens: false,
        };
        let mut rng = rng_for(&[stream_seed, TAG_INFER, i as u64]);
        let crg = (!config.no_crg).then_some(&models.crg);
        let out = run_episode(&mut models.ens, crg, None, tree, vocab, &settings, &mut rng)?;
        steps += out.record.steps.len() as u64;
        views.push(out.state.view());
    }
    Ok((views, steps))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub metrics: Metrics,
    pub steps: u64,
    pub wall_time_s: f64,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub reward_model_frozen: bool,
    pub kpg_log: TrainKpgLog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub classes: usize,
    pub per_fold: Vec<FoldRun>,
    pub aggregate: Metrics,
    pub warnings: Vec<String>,
}

/// Full protocol on one fold: build the fold vocabulary, pre-train and
/// freeze the reward classifier, train the generator pair, produce key
/// graphs, train the downstream classifier on them, and score the test
/// events.
pub fn run_fold(
    trees: &[PropagationTree],
    train_idx: &[usize],
    test_idx: &[usize],
    fold: usize,
    classes: usize,
    config: &ExperimentConfig,
) -> Result<FoldRun> {
    let t0 = std::time::Instant::now();
    let fold_seed = mix_seed(&[config.seed, TAG_FOLD, fold as u64]);

    let mut train_trees: Vec<PropagationTree> =
        train_idx.iter().map(|&i| trees[i].clone()).collect();
    let mut test_trees: Vec<PropagationTree> = test_idx.iter().map(|&i| trees[i].clone()).collect();
    let vocab = Vocabulary::build(&train_trees, config.feature_width);
    if vocab.is_empty() {
        return Err(KpgError::Input(
            "training fold has no tokens to build a vocabulary from".into(),
        ));
    }
    featurize_all(&mut train_trees, &vocab);
    featurize_all(&mut test_trees, &vocab);
    let d = vocab.len();
    let train_labels: Vec<usize> = train_trees.iter().map(|t| t.label).collect();
    let test_labels: Vec<usize> = test_trees.iter().map(|t| t.label).collect();

    // reward oracle: pre-trained on original trees, then frozen
    let mut reward_model = BiGcn::new(
        d,
        config.hidden,
        classes,
        &mut rng_for(&[fold_seed, TAG_REWARD_INIT]),
    );
    let train_views: Vec<GraphView> = train_trees.iter().map(GraphView::from_tree).collect();
    train_classifier(
        &mut reward_model,
        &train_views,
        &train_labels,
        &config.classifier_opts(mix_seed(&[fold_seed, TAG_REWARD_TRAIN])),
    )?;
    let frozen_hash = param_hash(&reward_model);

    let sizes: Vec<usize> = train_trees.iter().map(|t| t.node_count()).collect();
    let episode_cap = max_steps(&sizes, &config.tau_mode, config.tau);

    let mut models = KpgModels::new(d, classes, config, &mut rng_for(&[fold_seed, TAG_MODELS]));
    let kpg_log = train_kpg(
        &train_trees,
        &reward_model,
        &mut models,
        &vocab,
        config,
        episode_cap,
        fold_seed,
    )?;
    let reward_model_frozen = param_hash(&reward_model) == frozen_hash;

    let train_steps: u64 = kpg_log
        .epochs
        .iter()
        .flat_map(|e| e.episodes.iter())
        .map(|r| r.steps.len() as u64)
        .sum();

    // final key graphs and the downstream classifier
    let (train_keys, s1) = generate_key_graphs(
        &mut models,
        &train_trees,
        &vocab,
        config,
        episode_cap,
        mix_seed(&[fold_seed, 100]),
    )?;
    let (test_keys, s2) = generate_key_graphs(
        &mut models,
        &test_trees,
        &vocab,
        config,
        episode_cap,
        mix_seed(&[fold_seed, 101]),
    )?;

    let mut downstream = BiGcn::new(
        d,
        config.hidden,
        classes,
        &mut rng_for(&[fold_seed, TAG_DOWN_INIT]),
    );
    train_classifier(
        &mut downstream,
        &train_keys,
        &train_labels,
        &config.classifier_opts(mix_seed(&[fold_seed, TAG_DOWN_TRAIN])),
    )?;

    let text_head = if config.fuse_text {
        let mut head = TextHead::new(d, classes, &mut rng_for(&[fold_seed, TAG_TEXT]));
        head.train(&train_trees, &vocab, config, mix_seed(&[fold_seed, TAG_TEXT, 1]))?;
        Some(head)
    } else {
        None
    };

    let mut predictions = Vec::with_capacity(test_trees.len());
    for (tree, key) in test_trees.iter().zip(&test_keys) {
        let p_graph = downstream.class_probs(key)?;
        let probs = match &text_head {
            Some(head) => fuse_predictions(&p_graph, &head.event_probs(tree, &vocab)?)?,
            None => p_graph,
        };
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        predictions.push(best);
    }
    let metrics = evaluate_metrics(&predictions, &test_labels, classes)?;

    Ok(FoldRun {
        fold,
        metrics,
        steps: train_steps + s1 + s2,
        wall_time_s: t0.elapsed().as_secs_f64(),
        test_indices: test_idx.to_vec(),
        predictions,
        reward_model_frozen,
        kpg_log,
    })
}

/// Cross-validated experiment. Folds are independent and run in parallel
/// when `parallel` is set; outputs do not depend on scheduling.
pub fn run_experiment(
    trees: &[PropagationTree],
    config: &ExperimentConfig,
    parallel: bool,
) -> Result<ExperimentResult> {
    config.validate()?;
    let classes = trees
        .iter()
        .map(|t| t.label)
        .max()
        .ok_or_else(|| KpgError::Input("empty dataset".into()))?
        + 1;
    let split = split_folds(trees, config.folds, config.seed)?;

    let fold_ids: Vec<usize> = (0..config.folds).collect();
    let run_one = |&fold: &usize| -> Result<FoldRun> {
        run_fold(
            trees,
            &split.train_indices(fold),
            &split.test_indices(fold),
            fold,
            classes,
            config,
        )
    };
    let per_fold: Result<Vec<FoldRun>> = if parallel {
        use rayon::prelude::*;
        fold_ids.par_iter().map(run_one).collect()
    } else {
        fold_ids.iter().map(run_one).collect()
    };
    let per_fold = per_fold?;

    // pool every test prediction; each event is tested exactly once
    let mut pooled_preds = vec![0usize; trees.len()];
    let mut pooled_labels = vec![0usize; trees.len()];
    for fr in &per_fold {
        for (k, &idx) in fr.test_indices.iter().enumerate() {
            pooled_preds[idx] = fr.predictions[k];
            pooled_labels[idx] = trees[idx].label;
        }
    }
    let aggregate = evaluate_metrics(&pooled_preds, &pooled_labels, classes)?;

    Ok(ExperimentResult {
        config_hash: config.hash(),
        classes,
        per_fold,
        aggregate,
        warnings: split.warnings,
    })
}
