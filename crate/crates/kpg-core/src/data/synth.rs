//! Synthetic cascade generator with planted class signal.
//!
//! Each event roots a short, only weakly indicative claim and grows a tree
//! of responses. A response is a clean class-signal text with probability
//! `1 - noise_ratio`; otherwise it carries neutral noise tokens or
//! adversarial tokens from a different class's pool. Response attachment is
//! uniform over existing nodes and time offsets increase along root-to-leaf
//! paths, so temporal filtering and structural selection both have work to
//! do.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};

use super::tree::{Post, PropagationTree};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub events_per_class: usize,
    /// Probability that a response carries no class signal.
    pub noise_ratio: f64,
    /// Among noisy responses, fraction drawn from another class's pool.
    pub adversarial_frac: f64,
    pub signal_tokens_per_class: usize,
    pub noise_tokens: usize,
    /// Target median node count; sizes are log-normal around it.
    pub median_size: usize,
    pub size_sigma: f64,
    pub max_size: usize,
    pub root_len: usize,
    pub response_len: usize,
    /// Per root token: probability of a true-class signal token.
    pub root_signal_prob: f64,
    /// Per root token: probability of an adversarial token.
    pub root_adversarial_prob: f64,
    /// Mean of the exponential parent-to-child delay, minutes.
    pub inter_arrival_mean_min: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 2,
            events_per_class: 300,
            noise_ratio: 0.6,
            adversarial_frac: 0.35,
            signal_tokens_per_class: 12,
            noise_tokens: 40,
            median_size: 13,
            size_sigma: 0.7,
            max_size: 60,
            root_len: 6,
            response_len: 4,
            root_signal_prob: 0.35,
            root_adversarial_prob: 0.2,
            inter_arrival_mean_min: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(KpgError::Config(format!(
                "noise_ratio must be in [0,1], got {}",
                self.noise_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.adversarial_frac) {
            return Err(KpgError::Config("adversarial_frac must be in [0,1]".into()));
        }
        if self.root_signal_prob + self.root_adversarial_prob > 1.0 {
            return Err(KpgError::Config(
                "root_signal_prob + root_adversarial_prob must not exceed 1".into(),
            ));
        }
        if self.classes < 2 {
            return Err(KpgError::Config("need at least 2 classes".into()));
        }
        if self.median_size == 0 || self.max_size == 0 {
            return Err(KpgError::Config("sizes must be positive".into()));
        }
        Ok(())
    }

    fn signal_token(&self, class: usize, idx: usize) -> String {
        format!("c{class}sig{idx}")
    }

    fn noise_token(&self, idx: usize) -> String {
        format!("noise{idx}")
    }
}

fn sample_signal(cfg: &SynthConfig, class: usize, rng: &mut impl Rng) -> String {
    cfg.signal_token(class, rng.gen_range(0..cfg.signal_tokens_per_class))
}

fn sample_noise(cfg: &SynthConfig, rng: &mut impl Rng) -> String {
    cfg.noise_token(rng.gen_range(0..cfg.noise_tokens))
}

fn other_class(cfg: &SynthConfig, class: usize, rng: &mut impl Rng) -> usize {
    let o = rng.gen_range(0..cfg.classes - 1);
    if o >= class {
        o + 1
    } else {
        o
    }
}

fn exp_delay(mean: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(0.0..1.0);
    -mean * (1.0 - u).ln()
}

fn event_size(cfg: &SynthConfig, rng: &mut impl Rng) -> usize {
    // Box-Muller normal in log space; median of the log-normal equals
    // median_size before rounding/clamping.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let normal = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    let size = ((cfg.median_size as f64).ln() + cfg.size_sigma * normal).exp();
    (size.round() as usize).clamp(1, cfg.max_size)
}

fn root_text(cfg: &SynthConfig, class: usize, rng: &mut impl Rng) -> String {
    let mut toks = Vec::with_capacity(cfg.root_len);
    for _ in 0..cfg.root_len {
        let u: f64 = rng.gen_range(0.0..1.0);
        let tok = if u < cfg.root_signal_prob {
            sample_signal(cfg, class, rng)
        } else if u < cfg.root_signal_prob + cfg.root_adversarial_prob {
            let oc = other_class(cfg, class, rng);
            sample_signal(cfg, oc, rng)
        } else {
            sample_noise(cfg, rng)
        };
        toks.push(tok);
    }
    toks.join(" ")
}

fn response_text(cfg: &SynthConfig, class: usize, rng: &mut impl Rng) -> String {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut toks = Vec::with_capacity(cfg.response_len);
    if u >= cfg.noise_ratio {
        for _ in 0..cfg.response_len {
            toks.push(sample_signal(cfg, class, rng));
        }
    } else if rng.gen_range(0.0..1.0) < cfg.adversarial_frac {
        let oc = other_class(cfg, class, rng);
        for _ in 0..cfg.response_len {
            toks.push(sample_signal(cfg, oc, rng));
        }
    } else {
        for _ in 0..cfg.response_len {
            toks.push(sample_noise(cfg, rng));
        }
    }
    toks.join(" ")
}

/// Generates the full dataset. Every event gets its own rng stream derived
/// from `(seed, class, index)`, so output is byte-stable regardless of how
/// the caller iterates.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64) -> Result<Vec<PropagationTree>> {
    cfg.validate()?;
    let mut trees = Vec::with_capacity(cfg.classes * cfg.events_per_class);
    for class in 0..cfg.classes {
        for k in 0..cfg.events_per_class {
            let stream = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((class as u64) << 32)
                .wrapping_add(k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            trees.push(synth_event(cfg, class, k, &mut rng)?);
        }
    }
    Ok(trees)
}

fn synth_event(
    cfg: &SynthConfig,
    class: usize,
    index: usize,
    rng: &mut impl Rng,
) -> Result<PropagationTree> {
    let n = event_size(cfg, rng);
    let event_id = format!("ev-c{class}-{index:04}");
    let mut posts = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    posts.push(Post {
        id: format!("{event_id}-p0"),
        parent_id: None,
        time_offset_min: 0.0,
        raw_text: root_text(cfg, class, rng),
        tokens: vec![],
    });
    times.push(0.0f64);
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let t = times[parent] + exp_delay(cfg.inter_arrival_mean_min, rng);
        times.push(t);
        posts.push(Post {
            id: format!("{event_id}-p{i}"),
            parent_id: Some(posts[parent].id.clone()),
            time_offset_min: t,
            raw_text: response_text(cfg, class, rng),
            tokens: vec![],
        });
    }
    PropagationTree::from_posts(&event_id, class, posts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::tokenize;

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = SynthConfig {
            events_per_class: 20,
            ..SynthConfig::default()
        };
        let a = synth_dataset(&cfg, 7).unwrap();
        let b = synth_dataset(&cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_noise_ratio_is_a_config_error() {
        let cfg = SynthConfig {
            noise_ratio: 1.5,
            ..SynthConfig::default()
        };
        assert!(synth_dataset(&cfg, 0).is_err());
    }

    #[test]
    fn zero_noise_makes_responses_pure_signal() {
        let cfg = SynthConfig {
            events_per_class: 10,
            noise_ratio: 0.0,
            ..SynthConfig::default()
        };
        let trees = synth_dataset(&cfg, 3).unwrap();
        for tree in &trees {
            for post in tree.posts.iter().skip(1) {
                for tok in tokenize(&post.raw_text) {
                    assert!(
                        tok.starts_with(&format!("c{}sig", tree.label)),
                        "token {tok} is not class-{} signal",
                        tree.label
                    );
                }
            }
        }
    }

    #[test]
    fn full_noise_leaves_no_true_signal_in_responses() {
        let cfg = SynthConfig {
            events_per_class: 10,
            noise_ratio: 1.0,
            ..SynthConfig::default()
        };
        let trees = synth_dataset(&cfg, 3).unwrap();
        for tree in &trees {
            for post in tree.posts.iter().skip(1) {
                for tok in tokenize(&post.raw_text) {
                    assert!(!tok.starts_with(&format!("c{}sig", tree.label)));
                }
            }
        }
    }

    #[test]
    fn timestamps_increase_along_paths() {
        let cfg = SynthConfig {
            events_per_class: 20,
            ..SynthConfig::default()
        };
        for tree in synth_dataset(&cfg, 11).unwrap() {
            for &(u, v) in &tree.edges {
                assert!(tree.posts[v].time_offset_min > tree.posts[u].time_offset_min);
            }
            tree.validate().unwrap();
        }
    }

    #[test]
    fn sample_median_near_target() {
        let cfg = SynthConfig {
            events_per_class: 300,
            ..SynthConfig::default()
        };
        let trees = synth_dataset(&cfg, 5).unwrap();
        let mut sizes: Vec<usize> = trees.iter().map(|t| t.node_count()).collect();
        sizes.sort_unstable();
        let med = sizes[sizes.len() / 2] as f64;
        let target = cfg.median_size as f64;
        assert!(
            (med - target).abs() <= 0.2 * target,
            "sample median {med} outside 20% of {target}"
        );
    }
}
