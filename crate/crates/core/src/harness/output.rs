use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// One line of `results.csv`. Classification rows leave the fuel columns empty, RL rows
/// leave the accuracy and diagnostic columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub noise: f64,
    /// Held-out domain index, or the gravity constant for RL rows.
    pub target: String,
    pub seed: u64,
    pub source_val_acc: Option<f64>,
    pub target_acc: Option<f64>,
    pub fuel_mean: Option<f64>,
    pub fuel_std: Option<f64>,
    pub goal_rate: Option<f64>,
    pub cwd: Option<f64>,
    pub mi: Option<f64>,
    pub sec_per_iter: Option<f64>,
}

impl ResultRow {
    pub(crate) fn new(method: &str, noise: f64, target: String, seed: u64) -> Self {
        Self {
            method: method.to_string(),
            noise,
            target,
            seed,
            source_val_acc: None,
            target_acc: None,
            fuel_mean: None,
            fuel_std: None,
            goal_rate: None,
            cwd: None,
            mi: None,
            sec_per_iter: None,
        }
    }

    fn sort_key(&self) -> (String, u64, String, u64) {
        (
            self.method.clone(),
            self.noise.to_bits(),
            self.target.clone(),
            self.seed,
        )
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by_key(ResultRow::sort_key);
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_path(path)?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub iterations: usize,
    pub batch_size: usize,
    pub sec_per_iter: f64,
}

pub fn write_timing(path: impl AsRef<Path>, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Confidence histogram of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub method: String,
    pub target: usize,
    pub seed: u64,
    /// Fraction of training samples whose labelled-class confidence exceeds `η`.
    pub frac_above_eta: f64,
    pub histogram: String,
    pub mi: f64,
}

pub fn write_diagnostics(path: impl AsRef<Path>, rows: &[DiagnosticRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig, artifacts: Vec<String>) -> Result<Self> {
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config.hash()?,
            artifacts,
            config: config.clone(),
        })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        std::fs::write(
            dir.as_ref().join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}
