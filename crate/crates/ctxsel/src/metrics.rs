//! Training metrics as CSV: one row per GRPO iteration, header fixed by
//! [`MetricsRow`]'s field order.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::path::Path;

pub const HEADER: &str = "scene,iteration,mean_reward,max_reward,min_reward,mean_content,mean_clip,\
mean_artifact,advantage_std,objective,failed_rollouts,oracle_overlap,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scene: usize,
    pub iteration: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub min_reward: f64,
    pub mean_content: f64,
    pub mean_clip: f64,
    pub mean_artifact: f64,
    pub advantage_std: f64,
    pub objective: f64,
    pub failed_rollouts: usize,
    /// Mean fraction of each selection inside the oracle subset; empty when
    /// the history is too long to enumerate.
    pub oracle_overlap: Option<f64>,
    pub wall_ms: u64,
}

/// Appends rows, flushing after each so a crash leaves a readable prefix.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    last: Option<(usize, usize)>,
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format("metrics file", format!("{}: {e}", path.display()))
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(Error::io(path))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(HEADER.split(',')).map_err(csv_error(path))?;
        inner.flush().map_err(Error::io(path))?;
        Ok(Self { inner, last: None })
    }

    /// Opens an existing file for appending after checking its header.
    pub fn append(path: &Path) -> Result<Self> {
        let rows = read_metrics(path)?;
        let file = std::fs::OpenOptions::new().append(true).open(path).map_err(Error::io(path))?;
        let inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(Self { inner, last: rows.last().map(|r| (r.scene, r.iteration)) })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        let key = (row.scene, row.iteration);
        if self.last.is_some_and(|last| key <= last) {
            return Err(Error::format("metrics rows", format!("{key:?} does not follow {:?}", self.last.unwrap())));
        }
        self.last = Some(key);
        self.inner.serialize(row).map_err(|e| Error::format("metrics row", e.to_string()))?;
        self.inner.flush().map_err(|e| Error::format("metrics file", e.to_string()))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header: Vec<String> = reader.headers().map_err(csv_error(path))?.iter().map(String::from).collect();
    if header.join(",") != HEADER {
        return Err(Error::format("metrics file", format!("{}: unexpected header", path.display())));
    }
    reader.deserialize().collect::<Result<Vec<MetricsRow>, _>>().map_err(csv_error(path))
}

/// Trailing moving average over `window` rows (shorter at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}
