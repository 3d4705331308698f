//! Persisted outcome of one (variant, seed, config) run.

use std::fs;
use std::path::{Path, PathBuf};

use oranguide_core::env::SliceId;
use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::variant::VariantId;

pub const RECORD_FILE: &str = "record.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ogck";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub epochs: usize,
    pub seed: u64,
    pub mean_reward: f64,
    /// Per-slice fraction of evaluation (epoch, DU) pairs meeting the threshold.
    pub satisfaction: [Option<f64>; 3],
    pub mean_qos: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeRate {
    pub slice: SliceId,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: VariantId,
    pub seed: u64,
    pub config_hash: String,
    pub n_learnable: usize,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    /// Team reward per training iteration.
    pub rewards: Vec<f64>,
    pub accumulated_reward: f64,
    /// Slice QoS of the last training iteration.
    pub final_qos: [f64; 3],
    pub eval: EvalSummary,
    /// Per-UE epoch-mean rates observed during evaluation.
    pub ue_rates: Vec<UeRate>,
    pub wall_time_s: f64,
}

impl RunRecord {
    /// Sum of team rewards over the first `horizon` iterations.
    pub fn accumulated_over(&self, horizon: usize) -> Option<f64> {
        (self.rewards.len() >= horizon).then(|| self.rewards[..horizon].iter().sum())
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| BenchError::Record {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes through a temporary file so a record is either complete or absent.
    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let json = serde_json::to_string_pretty(self).map_err(|source| BenchError::Record {
            path: path.to_path_buf(),
            source,
        })?;
        write_atomic(path, json.as_bytes())
    }
}

/// `<root>/<VARIANT>_seed<seed>_<hash prefix>`.
pub fn run_dir(root: &Path, variant: VariantId, seed: u64, config_hash: &str) -> PathBuf {
    let prefix = &config_hash[..config_hash.len().min(12)];
    root.join(format!("{}_seed{}_{}", variant, seed, prefix))
}

/// Every record under `root`, sorted by (variant, seed, hash).
pub fn load_records(root: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let mut records = Vec::new();
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(BenchError::io(root, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| BenchError::io(root, e))?;
        let path = entry.path().join(RECORD_FILE);
        if path.is_file() {
            records.push(RunRecord::load(&path)?);
        }
    }
    records.sort_by(|a, b| {
        (a.variant, a.n_learnable, a.seed, &a.config_hash).cmp(&(b.variant, b.n_learnable, b.seed, &b.config_hash))
    });
    Ok(records)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| BenchError::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| BenchError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| BenchError::io(path, e))
}
