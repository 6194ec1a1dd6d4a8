//! Versioned JSON checkpoints: named parameter tensors plus the config hash
//! they were trained under. Loading verifies the hash and every shape.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KpgError, Result};
use crate::neural::Parameterized;
use crate::tensor::Tensor2;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    kind: String,
    config_hash: String,
    tensors: BTreeMap<String, Tensor2>,
}

pub fn save_model<M: Parameterized>(
    path: &Path,
    kind: &str,
    config_hash: &str,
    model: &M,
) -> Result<()> {
    let mut tensors = BTreeMap::new();
    model.visit(&mut |name, p| {
        tensors.insert(name.to_string(), p.value.clone());
    });
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        config_hash: config_hash.to_string(),
        tensors,
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &file)?;
    Ok(())
}

/// Loads parameter values into an already-constructed model of the right
/// architecture.
pub fn load_model<M: Parameterized>(
    path: &Path,
    kind: &str,
    config_hash: &str,
    model: &mut M,
) -> Result<()> {
    let r = BufReader::new(File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(r)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(KpgError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    if file.kind != kind {
        return Err(KpgError::Checkpoint(format!(
            "checkpoint kind '{}' does not match expected '{kind}'",
            file.kind
        )));
    }
    if file.config_hash != config_hash {
        return Err(KpgError::Checkpoint(format!(
            "checkpoint config hash {} does not match current config {config_hash}",
            file.config_hash
        )));
    }
    let mut err = None;
    model.visit_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        match file.tensors.get(name) {
            Some(t) if t.rows() == p.value.rows() && t.cols() == p.value.cols() => {
                p.value = t.clone();
            }
            Some(t) => {
                err = Some(KpgError::Checkpoint(format!(
                    "tensor '{name}' has shape {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    p.value.rows(),
                    p.value.cols()
                )));
            }
            None => {
                err = Some(KpgError::Checkpoint(format!("tensor '{name}' missing")));
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Hash of every parameter value, for frozen-model audits.
pub fn param_hash<M: Parameterized>(model: &M) -> String {
    let mut hasher = Sha256::new();
    model.visit(&mut |name, p| {
        hasher.update(name.as_bytes());
        hasher.update((p.value.rows() as u64).to_le_bytes());
        hasher.update((p.value.cols() as u64).to_le_bytes());
        for v in p.value.data() {
            hasher.update(v.to_le_bytes());
        }
    });
    hex(&hasher.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
