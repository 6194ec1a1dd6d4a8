//! Key propagation graph generation for rumor detection.
//!
//! An event is a source post plus its tree of comments and retweets. This
//! crate grows a compact "key" subgraph of each event one node at a time:
//! an ending node selector scores candidate nodes against the current key
//! graph, and a CVAE-based response generator tops up the candidate pool
//! when an event is too small to offer enough choices. Both are trained
//! alternately with rewards derived from a frozen, pre-trained BiGCN
//! classifier, and the finished key graphs feed a fresh BiGCN for the
//! downstream classification task.
//!
//! Layout:
//! - [`neural`]: dense/MLP/GCN/GRU blocks with hand-written backprop, Adam,
//!   and a finite-difference gradient checker;
//! - [`data`]: event trees, JSONL ingestion, TF-IDF features, a synthetic
//!   cascade generator, fold splitting, and temporal filtering;
//! - [`classifier`]: the bidirectional GCN classifier and metrics;
//! - [`ens`] / [`crg`]: the two policy components;
//! - [`pipeline`]: episodes, alternating training, cross-validated
//!   experiments, and result files;
//! - [`sweeps`]: parameter sweeps, ablations, early-stage runs;
//! - [`config`]: the flat experiment configuration.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod crg;
pub mod data;
pub mod ens;
pub mod error;
pub mod neural;
pub mod pipeline;
pub mod sweeps;
pub mod tensor;

pub use config::{parse_config, parse_config_file, ExperimentConfig, SweepSpec};
pub use error::{KpgError, Result};
