//! Event prompt set files: JSON Lines, one set per line.

use crate::error::{Error, Result};
use ctxsel_core::synthenv::{generate_eps, EventPromptSet, PromptSetSpec};
use ctxsel_core::rng::{derive_stream, purpose};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSetRecord {
    pub identity: usize,
    pub prompts: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
}

impl From<&EventPromptSet> for PromptSetRecord {
    fn from(set: &EventPromptSet) -> Self {
        Self {
            identity: set.identity,
            prompts: set.prompts.iter().map(|p| p.text.clone()).collect(),
            embeddings: set.prompts.iter().map(|p| p.embedding.clone()).collect(),
        }
    }
}

pub fn generate(spec: &PromptSetSpec, count: usize, seed: u64) -> Result<Vec<PromptSetRecord>> {
    let sets = generate_eps(spec, count, &mut derive_stream(seed, &[purpose::PROMPTS]))?;
    Ok(sets.iter().map(PromptSetRecord::from).collect())
}

pub fn to_jsonl(records: &[PromptSetRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serialises") + "\n").collect()
}

pub fn read(path: &Path) -> Result<Vec<PromptSetRecord>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format("prompt set file", format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
