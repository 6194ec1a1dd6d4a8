//! Parameter sweeps, ablation variants, and early-stage experiments built
//! on top of `run_experiment`.

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepSpec};
use crate::data::{early_stage_filter, PropagationTree};
use crate::error::{KpgError, Result};
use crate::pipeline::{run_experiment, ExperimentResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
}

/// One full experiment per sweep value.
pub fn run_sweep(
    trees: &[PropagationTree],
    base: &ExperimentConfig,
    spec: &SweepSpec,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let config = spec.apply(base, value);
        config.validate()?;
        let result = run_experiment(trees, &config, parallel)?;
        rows.push(SweepRow {
            value,
            accuracy: result.aggregate.accuracy,
            f1_per_class: result.aggregate.f1_per_class,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(param: &str, rows: &[SweepRow], classes: usize) -> String {
    let mut out = format!("{param},accuracy");
    for c in 0..classes {
        out.push_str(&format!(",f1_class{c}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:?},{:?}", row.value, row.accuracy));
        for f1 in &row.f1_per_class {
            out.push_str(&format!(",{f1:?}"));
        }
        out.push('\n');
    }
    out
}

/// The paper-style ablation grid.
pub const ABLATION_VARIANTS: &[&str] = &["full", "no-ens", "no-crg", "no-reward"];

pub fn apply_variant(base: &ExperimentConfig, variant: &str) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.no_ens = false;
    c.no_crg = false;
    c.no_reward = false;
    match variant {
        "full" => {}
        "no-ens" => c.no_ens = true,
        "no-crg" => c.no_crg = true,
        "no-reward" => c.no_reward = true,
        _ => {
            return Err(KpgError::Config(format!(
                "unknown ablation variant '{variant}'; expected one of {}",
                ABLATION_VARIANTS.join(", ")
            )))
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EarlyStageRow {
    pub delta_min: f64,
    pub mean_nodes: f64,
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
}

/// Filters the dataset at each temporal threshold and runs the full
/// pipeline on what remains. `f64::INFINITY` reproduces the unfiltered run.
pub fn run_early_stage(
    trees: &[PropagationTree],
    config: &ExperimentConfig,
    deltas: &[f64],
    parallel: bool,
) -> Result<Vec<EarlyStageRow>> {
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let filtered: Vec<PropagationTree> = if delta.is_infinite() {
            trees.to_vec()
        } else {
            trees.iter().map(|t| early_stage_filter(t, delta)).collect()
        };
        let mean_nodes =
            filtered.iter().map(|t| t.node_count()).sum::<usize>() as f64 / filtered.len() as f64;
        let result = run_experiment(&filtered, config, parallel)?;
        rows.push(EarlyStageRow {
            delta_min: delta,
            mean_nodes,
            accuracy: result.aggregate.accuracy,
            f1_per_class: result.aggregate.f1_per_class,
        });
    }
    Ok(rows)
}

pub fn early_stage_csv(rows: &[EarlyStageRow], classes: usize) -> String {
    let mut out = String::from("delta_min,mean_nodes,accuracy");
    for c in 0..classes {
        out.push_str(&format!(",f1_class{c}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{:?},{:?},{:?}",
            row.delta_min, row.mean_nodes, row.accuracy
        ));
        for f1 in &row.f1_per_class {
            out.push_str(&format!(",{f1:?}"));
        }
        out.push('\n');
    }
    out
}

/// Convenience wrapper for callers that only need the aggregate accuracy.
pub fn experiment_accuracy(result: &ExperimentResult) -> f64 {
    result.aggregate.accuracy
}
