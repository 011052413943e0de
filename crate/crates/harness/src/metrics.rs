//! Per-run records and their on-disk layout.
//!
//! `metrics.csv` columns (schema 1): epoch, lr, train_loss, reg_mean,
//! raw_gap_mean, clamp_fraction, game_iterations, skipped_games,
//! discarded_original, discarded_augmented, heldout_accuracy.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dcg_core::filter::{FilterCounts, FilterHistory, SampleSnapshot};
use dcg_core::model::write_checkpoint;
use dcg_core::{DomainId, ModelParams, SampleId};
use serde::{Deserialize, Serialize};

use crate::config::{TrainConfig, Variant};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Mean regularizer value over iterations that played the game.
    pub reg_mean: f64,
    pub raw_gap_mean: f64,
    pub clamp_fraction: f64,
    pub game_iterations: usize,
    pub skipped_games: usize,
    pub discarded_original: usize,
    pub discarded_augmented: usize,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub variant: Variant,
    pub seed: u64,
    pub held_out: DomainId,
    pub omega: f64,
    pub k: usize,
    pub config: TrainConfig,
    pub iterations_per_epoch: usize,
    pub isolation_checks: u64,
    pub final_accuracy: f64,
    pub source_accuracy: f64,
    /// Number of samples per cumulative top-k count.
    pub filter_top_histogram: BTreeMap<u64, u64>,
    pub epochs: Vec<EpochMetrics>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// On-disk form of a run's filter history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFile {
    pub counts: Vec<(SampleId, FilterCounts)>,
    pub snapshots: Vec<SampleSnapshot>,
}

impl HistoryFile {
    pub fn of(history: &FilterHistory) -> Self {
        Self {
            counts: history.counts().iter().map(|(id, c)| (*id, c.clone())).collect(),
            snapshots: history.snapshots().values().cloned().collect(),
        }
    }
}

pub fn result_json(result: &RunResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)? + "\n")
}

pub fn write_metrics_csv(epochs: &[EpochMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `result.json`, `model.ckpt` and `filter_history.json`.
pub fn write_run(dir: &Path, result: &RunResult, params: &ModelParams, history: &FilterHistory) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(&result.epochs, &dir.join("metrics.csv"))?;
    fs::write(dir.join("result.json"), result_json(result)?)?;
    write_checkpoint(params, &dir.join("model.ckpt"))?;
    fs::write(dir.join("filter_history.json"), serde_json::to_string(&HistoryFile::of(history))?)?;
    Ok(())
}
