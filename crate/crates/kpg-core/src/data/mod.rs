//! Event data model, ingestion, featurization, synthetic generation, and
//! split utilities.

pub mod filter;
pub mod folds;
pub mod ingest;
pub mod synth;
pub mod tree;
pub mod vocab;

pub use filter::{early_stage_filter, time_quantile};
pub use folds::{curriculum_order, split_folds, DatasetSplit};
pub use ingest::{event_from_json, event_to_json, ingest_jsonl, write_jsonl};
pub use synth::{synth_dataset, SynthConfig};
pub use tree::{Post, PropagationTree};
pub use vocab::{featurize, featurize_all, tokenize, Vocabulary};
