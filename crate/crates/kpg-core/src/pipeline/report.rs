//! Result emission: a deterministic metrics file (JSON + CSV flattening)
//! and a separate timings file for wall-clock measurements, which vary
//! between runs and would otherwise break bit-level reproducibility.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::ExperimentResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetricsRow {
    pub fold: usize,
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub dataset_hash: String,
    pub classes: usize,
    pub per_fold: Vec<FoldMetricsRow>,
    pub aggregate: AggregateRow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingsFile {
    pub per_fold_wall_time_s: Vec<f64>,
    pub total_wall_time_s: f64,
}

/// Kept for CLI exit-code mapping.
#[derive(Debug)]
pub enum ExperimentError {
    Config(String),
    Data(String),
}

impl MetricsFile {
    pub fn from_result(result: &ExperimentResult, dataset_hash: &str) -> Self {
        MetricsFile {
            config_hash: result.config_hash.clone(),
            dataset_hash: dataset_hash.to_string(),
            classes: result.classes,
            per_fold: result
                .per_fold
                .iter()
                .map(|f| FoldMetricsRow {
                    fold: f.fold,
                    accuracy: f.metrics.accuracy,
                    f1_per_class: f.metrics.f1_per_class.clone(),
                    steps: f.steps,
                })
                .collect(),
            aggregate: AggregateRow {
                accuracy: result.aggregate.accuracy,
                f1_per_class: result.aggregate.f1_per_class.clone(),
            },
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,accuracy");
        for c in 0..self.classes {
            out.push_str(&format!(",f1_class{c}"));
        }
        out.push_str(",steps\n");
        for row in &self.per_fold {
            out.push_str(&format!("{},{:?}", row.fold, row.accuracy));
            for f1 in &row.f1_per_class {
                out.push_str(&format!(",{f1:?}"));
            }
            out.push_str(&format!(",{}\n", row.steps));
        }
        out.push_str(&format!("aggregate,{:?}", self.aggregate.accuracy));
        for f1 in &self.aggregate.f1_per_class {
            out.push_str(&format!(",{f1:?}"));
        }
        out.push_str(",\n");
        out
    }
}

/// Writes `metrics.json`, `metrics.csv`, and `timings.json` under `dir`.
pub fn write_metrics(dir: &Path, result: &ExperimentResult, dataset_hash: &str) -> Result<MetricsFile> {
    fs::create_dir_all(dir)?;
    let metrics = MetricsFile::from_result(result, dataset_hash);
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    fs::write(dir.join("metrics.csv"), metrics.to_csv())?;
    let timings = TimingsFile {
        per_fold_wall_time_s: result.per_fold.iter().map(|f| f.wall_time_s).collect(),
        total_wall_time_s: result.per_fold.iter().map(|f| f.wall_time_s).sum(),
    };
    fs::write(
        dir.join("timings.json"),
        serde_json::to_string_pretty(&timings)?,
    )?;
    Ok(metrics)
}

/// sha256 of a file's bytes, for dataset provenance.
pub fn file_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(crate::checkpoint::hex(&h.finalize())[..16].to_string())
}
