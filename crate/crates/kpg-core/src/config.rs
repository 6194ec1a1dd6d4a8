//! Experiment configuration: a flat key/value document with typed defaults,
//! dotted overrides, domain validation, and a content hash for provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::TrainOpts;
use crate::data::SynthConfig;
use crate::ens::EnsLossVariant;
use crate::error::{KpgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Vocabulary cap, which bounds the feature width d.
    pub feature_width: usize,
    pub hidden: usize,
    pub z_dim: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub gamma: usize,
    pub rollout_len: usize,
    pub tau: f64,
    /// "tau": L = round(tau * median size); "avg": L = round(mean size).
    pub tau_mode: String,
    pub folds: usize,
    pub classifier_epochs: usize,
    pub classifier_patience: usize,
    pub kpg_epochs: usize,
    pub kpg_patience: usize,
    pub max_text_len: usize,
    pub val_fraction: f64,
    pub no_ens: bool,
    pub no_crg: bool,
    pub no_reward: bool,
    /// Loss-variant switch: compute as usual but pin every reward to 1.
    pub force_unit_rewards: bool,
    /// "head_advantage" or "action_nll".
    pub ens_loss: String,
    pub pg_weight: f64,
    pub fuse_text: bool,
    pub deltas: Vec<f64>,

    pub synth_classes: usize,
    pub synth_events_per_class: usize,
    pub synth_noise_ratio: f64,
    pub synth_adversarial_frac: f64,
    pub synth_signal_tokens_per_class: usize,
    pub synth_noise_tokens: usize,
    pub synth_median_size: usize,
    pub synth_size_sigma: f64,
    pub synth_max_size: usize,
    pub synth_root_len: usize,
    pub synth_response_len: usize,
    pub synth_root_signal_prob: f64,
    pub synth_root_adversarial_prob: f64,
    pub synth_inter_arrival_mean_min: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        ExperimentConfig {
            seed: 17,
            feature_width: 1000,
            hidden: 64,
            z_dim: 16,
            batch: 128,
            lr: 5e-4,
            decay: 1e-4,
            epsilon: 0.8,
            gamma: 5,
            rollout_len: 10,
            tau: 8.0,
            tau_mode: "tau".to_string(),
            folds: 5,
            classifier_epochs: 200,
            classifier_patience: 10,
            kpg_epochs: 5,
            kpg_patience: 3,
            max_text_len: 12,
            val_fraction: 0.1,
            no_ens: false,
            no_crg: false,
            no_reward: false,
            force_unit_rewards: false,
            ens_loss: "head_advantage".to_string(),
            pg_weight: 1.0,
            fuse_text: false,
            deltas: vec![20.0, 60.0, 120.0, 240.0],
            synth_classes: synth.classes,
            synth_events_per_class: synth.events_per_class,
            synth_noise_ratio: synth.noise_ratio,
            synth_adversarial_frac: synth.adversarial_frac,
            synth_signal_tokens_per_class: synth.signal_tokens_per_class,
            synth_noise_tokens: synth.noise_tokens,
            synth_median_size: synth.median_size,
            synth_size_sigma: synth.size_sigma,
            synth_max_size: synth.max_size,
            synth_root_len: synth.root_len,
            synth_response_len: synth.response_len,
            synth_root_signal_prob: synth.root_signal_prob,
            synth_root_adversarial_prob: synth.root_adversarial_prob,
            synth_inter_arrival_mean_min: synth.inter_arrival_mean_min,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "feature_width",
    "hidden",
    "z_dim",
    "batch",
    "lr",
    "decay",
    "epsilon",
    "gamma",
    "rollout_len",
    "tau",
    "tau_mode",
    "folds",
    "classifier_epochs",
    "classifier_patience",
    "kpg_epochs",
    "kpg_patience",
    "max_text_len",
    "val_fraction",
    "no_ens",
    "no_crg",
    "no_reward",
    "force_unit_rewards",
    "ens_loss",
    "pg_weight",
    "fuse_text",
    "deltas",
    "synth_classes",
    "synth_events_per_class",
    "synth_noise_ratio",
    "synth_adversarial_frac",
    "synth_signal_tokens_per_class",
    "synth_noise_tokens",
    "synth_median_size",
    "synth_size_sigma",
    "synth_max_size",
    "synth_root_len",
    "synth_response_len",
    "synth_root_signal_prob",
    "synth_root_adversarial_prob",
    "synth_inter_arrival_mean_min",
];

fn unknown_key(key: &str) -> KpgError {
    KpgError::Config(format!(
        "unknown config key '{key}'; valid keys: {}",
        KEYS.join(", ")
    ))
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(KpgError::Config(format!(
            "key '{key}' expects a non-negative integer, got {v}"
        ))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    Ok(as_u64(key, v)? as usize)
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(KpgError::Config(format!(
            "key '{key}' expects a number, got {v}"
        ))),
    }
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    match v {
        toml::Value::Boolean(b) => Ok(*b),
        _ => Err(KpgError::Config(format!(
            "key '{key}' expects a boolean, got {v}"
        ))),
    }
}

fn as_string(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        _ => Err(KpgError::Config(format!(
            "key '{key}' expects a string, got {v}"
        ))),
    }
}

fn as_f64_list(key: &str, v: &toml::Value) -> Result<Vec<f64>> {
    match v {
        toml::Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
        _ => Err(KpgError::Config(format!(
            "key '{key}' expects a list of numbers, got {v}"
        ))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        match key {
            "seed" => self.seed = as_u64(key, value)?,
            "feature_width" => self.feature_width = as_usize(key, value)?,
            "hidden" => self.hidden = as_usize(key, value)?,
            "z_dim" => self.z_dim = as_usize(key, value)?,
            "batch" => self.batch = as_usize(key, value)?,
            "lr" => self.lr = as_f64(key, value)?,
            "decay" => self.decay = as_f64(key, value)?,
            "epsilon" => self.epsilon = as_f64(key, value)?,
            "gamma" => self.gamma = as_usize(key, value)?,
            "rollout_len" => self.rollout_len = as_usize(key, value)?,
            "tau" => self.tau = as_f64(key, value)?,
            "tau_mode" => self.tau_mode = as_string(key, value)?,
            "folds" => self.folds = as_usize(key, value)?,
            "classifier_epochs" => self.classifier_epochs = as_usize(key, value)?,
            "classifier_patience" => self.classifier_patience = as_usize(key, value)?,
            "kpg_epochs" => self.kpg_epochs = as_usize(key, value)?,
            "kpg_patience" => self.kpg_patience = as_usize(key, value)?,
            "max_text_len" => self.max_text_len = as_usize(key, value)?,
            "val_fraction" => self.val_fraction = as_f64(key, value)?,
            "no_ens" => self.no_ens = as_bool(key, value)?,
            "no_crg" => self.no_crg = as_bool(key, value)?,
            "no_reward" => self.no_reward = as_bool(key, value)?,
            "force_unit_rewards" => self.force_unit_rewards = as_bool(key, value)?,
            "ens_loss" => self.ens_loss = as_string(key, value)?,
            "pg_weight" => self.pg_weight = as_f64(key, value)?,
            "fuse_text" => self.fuse_text = as_bool(key, value)?,
            "deltas" => self.deltas = as_f64_list(key, value)?,
            "synth_classes" => self.synth_classes = as_usize(key, value)?,
            "synth_events_per_class" => self.synth_events_per_class = as_usize(key, value)?,
            "synth_noise_ratio" => self.synth_noise_ratio = as_f64(key, value)?,
            "synth_adversarial_frac" => self.synth_adversarial_frac = as_f64(key, value)?,
            "synth_signal_tokens_per_class" => {
                self.synth_signal_tokens_per_class = as_usize(key, value)?
            }
            "synth_noise_tokens" => self.synth_noise_tokens = as_usize(key, value)?,
            "synth_median_size" => self.synth_median_size = as_usize(key, value)?,
            "synth_size_sigma" => self.synth_size_sigma = as_f64(key, value)?,
            "synth_max_size" => self.synth_max_size = as_usize(key, value)?,
            "synth_root_len" => self.synth_root_len = as_usize(key, value)?,
            "synth_response_len" => self.synth_response_len = as_usize(key, value)?,
            "synth_root_signal_prob" => self.synth_root_signal_prob = as_f64(key, value)?,
            "synth_root_adversarial_prob" => {
                self.synth_root_adversarial_prob = as_f64(key, value)?
            }
            "synth_inter_arrival_mean_min" => {
                self.synth_inter_arrival_mean_min = as_f64(key, value)?
            }
            _ => return Err(unknown_key(key)),
        }
        Ok(())
    }

    /// Applies a CLI-style `key=value` override; the value is parsed as
    /// bool, integer, float, comma list, or bare string, in that order.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| KpgError::Config(format!("override '{spec}' is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = if let Ok(b) = raw.parse::<bool>() {
            toml::Value::Boolean(b)
        } else if let Ok(i) = raw.parse::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = raw.parse::<f64>() {
            toml::Value::Float(f)
        } else if raw.contains(',') {
            let items: Result<Vec<toml::Value>> = raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(toml::Value::Float)
                        .map_err(|_| KpgError::Config(format!("bad list element '{s}' in '{spec}'")))
                })
                .collect();
            toml::Value::Array(items?)
        } else {
            toml::Value::String(raw.to_string())
        };
        self.set(key, &value)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(KpgError::Config(msg.to_string()))
            }
        };
        check(
            (0.0..=1.0).contains(&self.epsilon),
            &format!("epsilon must be in [0,1], got {}", self.epsilon),
        )?;
        check(self.tau >= 0.0, &format!("tau must be >= 0, got {}", self.tau))?;
        check(
            self.tau_mode == "tau" || self.tau_mode == "avg",
            "tau_mode must be 'tau' or 'avg'",
        )?;
        check(self.gamma >= 1, "gamma must be >= 1")?;
        check(self.lr > 0.0, "lr must be positive")?;
        check(self.decay >= 0.0, "decay must be non-negative")?;
        check(self.batch >= 1, "batch must be >= 1")?;
        check(self.folds >= 2, "folds must be >= 2")?;
        check(self.hidden >= 1, "hidden must be >= 1")?;
        check(self.z_dim >= 1, "z_dim must be >= 1")?;
        check(self.feature_width >= 1, "feature_width must be >= 1")?;
        check(self.max_text_len >= 1, "max_text_len must be >= 1")?;
        check(
            (0.0..1.0).contains(&self.val_fraction),
            "val_fraction must be in [0,1)",
        )?;
        check(
            self.ens_loss == "head_advantage" || self.ens_loss == "action_nll",
            "ens_loss must be 'head_advantage' or 'action_nll'",
        )?;
        check(self.pg_weight >= 0.0, "pg_weight must be non-negative")?;
        check(
            self.deltas.iter().all(|d| *d >= 0.0),
            "deltas must be non-negative",
        )?;
        self.synth_config().validate()?;
        Ok(())
    }

    pub fn ens_loss_variant(&self) -> EnsLossVariant {
        if self.ens_loss == "action_nll" {
            EnsLossVariant::ActionNll
        } else {
            EnsLossVariant::HeadWithAdvantage
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            classes: self.synth_classes,
            events_per_class: self.synth_events_per_class,
            noise_ratio: self.synth_noise_ratio,
            adversarial_frac: self.synth_adversarial_frac,
            signal_tokens_per_class: self.synth_signal_tokens_per_class,
            noise_tokens: self.synth_noise_tokens,
            median_size: self.synth_median_size,
            size_sigma: self.synth_size_sigma,
            max_size: self.synth_max_size,
            root_len: self.synth_root_len,
            response_len: self.synth_response_len,
            root_signal_prob: self.synth_root_signal_prob,
            root_adversarial_prob: self.synth_root_adversarial_prob,
            inter_arrival_mean_min: self.synth_inter_arrival_mean_min,
        }
    }

    pub fn classifier_opts(&self, seed: u64) -> TrainOpts {
        TrainOpts {
            lr: self.lr,
            decay: self.decay,
            batch: self.batch,
            max_epochs: self.classifier_epochs,
            patience: self.classifier_patience,
            seed,
            val_fraction: self.val_fraction,
        }
    }

    /// Canonical serialization with every field in declaration order; the
    /// config hash is the sha256 of this string.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        push("seed", format!("{}", self.seed));
        push("feature_width", format!("{}", self.feature_width));
        push("hidden", format!("{}", self.hidden));
        push("z_dim", format!("{}", self.z_dim));
        push("batch", format!("{}", self.batch));
        push("lr", format!("{:?}", self.lr));
        push("decay", format!("{:?}", self.decay));
        push("epsilon", format!("{:?}", self.epsilon));
        push("gamma", format!("{}", self.gamma));
        push("rollout_len", format!("{}", self.rollout_len));
        push("tau", format!("{:?}", self.tau));
        push("tau_mode", self.tau_mode.clone());
        push("folds", format!("{}", self.folds));
        push("classifier_epochs", format!("{}", self.classifier_epochs));
        push("classifier_patience", format!("{}", self.classifier_patience));
        push("kpg_epochs", format!("{}", self.kpg_epochs));
        push("kpg_patience", format!("{}", self.kpg_patience));
        push("max_text_len", format!("{}", self.max_text_len));
        push("val_fraction", format!("{:?}", self.val_fraction));
        push("no_ens", format!("{}", self.no_ens));
        push("no_crg", format!("{}", self.no_crg));
        push("no_reward", format!("{}", self.no_reward));
        push("force_unit_rewards", format!("{}", self.force_unit_rewards));
        push("ens_loss", self.ens_loss.clone());
        push("pg_weight", format!("{:?}", self.pg_weight));
        push("fuse_text", format!("{}", self.fuse_text));
        push(
            "deltas",
            self.deltas
                .iter()
                .map(|d| format!("{d:?}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        push("synth_classes", format!("{}", self.synth_classes));
        push(
            "synth_events_per_class",
            format!("{}", self.synth_events_per_class),
        );
        push("synth_noise_ratio", format!("{:?}", self.synth_noise_ratio));
        push(
            "synth_adversarial_frac",
            format!("{:?}", self.synth_adversarial_frac),
        );
        push(
            "synth_signal_tokens_per_class",
            format!("{}", self.synth_signal_tokens_per_class),
        );
        push("synth_noise_tokens", format!("{}", self.synth_noise_tokens));
        push("synth_median_size", format!("{}", self.synth_median_size));
        push("synth_size_sigma", format!("{:?}", self.synth_size_sigma));
        push("synth_max_size", format!("{}", self.synth_max_size));
        push("synth_root_len", format!("{}", self.synth_root_len));
        push("synth_response_len", format!("{}", self.synth_response_len));
        push(
            "synth_root_signal_prob",
            format!("{:?}", self.synth_root_signal_prob),
        );
        push(
            "synth_root_adversarial_prob",
            format!("{:?}", self.synth_root_adversarial_prob),
        );
        push(
            "synth_inter_arrival_mean_min",
            format!("{:?}", self.synth_inter_arrival_mean_min),
        );
        s
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        crate::checkpoint::hex(&hasher.finalize())[..16].to_string()
    }
}

/// Parses a flat TOML document over the defaults, then applies overrides.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| KpgError::Config(format!("config does not parse as TOML: {e}")))?;
    let mut config = ExperimentConfig::default();
    for (key, value) in &table {
        config.set(key, value)?;
    }
    for o in overrides {
        config.set_override(o)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config_file(path: &std::path::Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}

/// A one-parameter sweep specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(param: &str, values: Vec<f64>) -> Result<Self> {
        let ok = match param {
            "epsilon" => values.iter().all(|v| (0.0..=1.0).contains(v)),
            "tau" => values.iter().all(|v| *v >= 0.0),
            "rollout_l" => values.iter().all(|v| *v >= 0.0 && v.fract() == 0.0),
            "gamma" => values.iter().all(|v| *v >= 1.0 && v.fract() == 0.0),
            _ => {
                return Err(KpgError::Config(format!(
                    "sweep parameter must be one of epsilon, tau, rollout_l, gamma; got '{param}'"
                )))
            }
        };
        if !ok {
            return Err(KpgError::Config(format!(
                "sweep values {values:?} outside the domain of '{param}'"
            )));
        }
        Ok(SweepSpec {
            param: param.to_string(),
            values,
        })
    }

    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = base.clone();
        match self.param.as_str() {
            "epsilon" => c.epsilon = value,
            "tau" => c.tau = value,
            "rollout_l" => c.rollout_len = value as usize,
            "gamma" => c.gamma = value as usize,
            _ => unreachable!("validated at construction"),
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_all_defaults() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c.epsilon, 0.8);
        assert_eq!(c.gamma, 5);
        assert_eq!(c.rollout_len, 10);
        assert_eq!(c.hidden, 64);
        assert_eq!(c.batch, 128);
        assert_eq!(c.lr, 5e-4);
        assert_eq!(c.decay, 1e-4);
        assert_eq!(c.folds, 5);
    }

    #[test]
    fn override_changes_value_and_hash() {
        let base = parse_config("", &[]).unwrap();
        let over = parse_config("", &["epsilon=0.5".to_string()]).unwrap();
        assert_eq!(over.epsilon, 0.5);
        assert_ne!(base.hash(), over.hash());
    }

    #[test]
    fn out_of_domain_override_is_config_error() {
        assert!(parse_config("", &["epsilon=1.5".to_string()]).is_err());
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = parse_config("nonsense = 3\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nonsense"));
        assert!(msg.contains("epsilon"));
    }

    #[test]
    fn file_values_then_overrides() {
        let c = parse_config("tau = 2\nhidden = 32\n", &["tau=4".to_string()]).unwrap();
        assert_eq!(c.tau, 4.0);
        assert_eq!(c.hidden, 32);
    }

    #[test]
    fn delta_list_override() {
        let c = parse_config("", &["deltas=10,20,30".to_string()]).unwrap();
        assert_eq!(c.deltas, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn sweep_domains_enforced() {
        assert!(SweepSpec::new("epsilon", vec![0.0, 0.5, 1.0]).is_ok());
        assert!(SweepSpec::new("epsilon", vec![1.5]).is_err());
        assert!(SweepSpec::new("tau", vec![0.0, 2.0, 4.0, 8.0]).is_ok());
        assert!(SweepSpec::new("bogus", vec![1.0]).is_err());
    }
}
