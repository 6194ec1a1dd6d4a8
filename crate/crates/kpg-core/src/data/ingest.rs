//! JSONL event ingestion and serialization.
//!
//! One event per line:
//! `{"event_id": str, "label": int, "posts": [{"id": str, "parent_id": str|null,
//! "time_offset_min": number, "text": str}, ...]}`
//! Unknown fields are ignored; the root is the unique post with a null
//! `parent_id`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};

use super::tree::{Post, PropagationTree};

#[derive(Debug, Serialize, Deserialize)]
struct PostRecord {
    id: String,
    parent_id: Option<String>,
    time_offset_min: f64,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    event_id: String,
    label: usize,
    posts: Vec<PostRecord>,
}

pub fn ingest_jsonl(path: &Path) -> Result<Vec<PropagationTree>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut trees = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(&line).map_err(|e| {
            KpgError::Input(format!("line {}: invalid event json: {e}", lineno + 1))
        })?;
        trees.push(tree_from_record(record)?);
    }
    Ok(trees)
}

fn tree_from_record(record: EventRecord) -> Result<PropagationTree> {
    let posts = record
        .posts
        .into_iter()
        .map(|p| Post {
            id: p.id,
            parent_id: p.parent_id,
            time_offset_min: p.time_offset_min,
            raw_text: p.text,
            tokens: vec![],
        })
        .collect();
    PropagationTree::from_posts(&record.event_id, record.label, posts)
}

pub fn write_jsonl(path: &Path, trees: &[PropagationTree]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for tree in trees {
        let line = event_to_json(tree)?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn event_to_json(tree: &PropagationTree) -> Result<String> {
    let record = EventRecord {
        event_id: tree.event_id.clone(),
        label: tree.label,
        posts: tree
            .posts
            .iter()
            .map(|p| PostRecord {
                id: p.id.clone(),
                parent_id: p.parent_id.clone(),
                time_offset_min: p.time_offset_min,
                text: p.raw_text.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&record)?)
}

pub fn event_from_json(line: &str) -> Result<PropagationTree> {
    let record: EventRecord =
        serde_json::from_str(line).map_err(|e| KpgError::Input(format!("invalid event json: {e}")))?;
    tree_from_record(record)
}
