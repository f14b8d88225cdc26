//! On-disk formats: metrics CSV, projector log with binary sidecars, and
//! checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sara_core::matcore::io::{read_binary, write_binary};
use sara_core::matcore::Matrix;
use sara_core::optimizers::{OptimizerKind, OptimizerState};
use sara_core::subspace::Projector;

use crate::error::{HarnessError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PROJECTOR_LOG: &str = "projectors.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_HEADER: &str = "step,layer,metric,value";

/// Layer name used for whole-model metrics.
pub const ALL_LAYERS: &str = "all";

/// One `step,layer,metric,value` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub layer: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(step: u64, layer: &str, metric: &str, value: f64) -> Self {
        Self {
            step,
            layer: layer.to_string(),
            metric: metric.to_string(),
            value,
        }
    }
}

/// Header plus rows; values use the shortest representation that parses back
/// to the same `f64`.
pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(32 * rows.len() + 32);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:?}", r.step, r.layer, r.metric, r.value);
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        other => {
            return Err(HarnessError::Csv {
                line: 1,
                message: format!("expected header {METRICS_HEADER:?}, found {:?}", other.map(|o| o.1)),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Csv { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        rows.push(MetricRow {
            step: f[0].parse().map_err(|e| err(format!("step: {e}")))?,
            layer: f[1].to_string(),
            metric: f[2].to_string(),
            value: f[3].parse().map_err(|e| err(format!("value: {e}")))?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricRow>> {
    let path = dir.join(METRICS_FILE);
    metrics_from_csv(&fs::read_to_string(&path).map_err(HarnessError::io(&path))?)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(HarnessError::io(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(HarnessError::io(path))
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_binary(path, m).map_err(|e| match e {
        sara_core::Error::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    read_binary(path).map_err(|e| match e {
        sara_core::Error::Io(source) => HarnessError::io(path)(source),
        other => other.into(),
    })
}

/// One projector-log line; the basis lives in the binary sidecar `file`,
/// relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorLogEntry {
    pub step: u64,
    pub layer: String,
    pub layer_index: usize,
    pub rows: usize,
    pub cols: usize,
    pub source_indices: Option<Vec<usize>>,
    pub file: String,
}

pub fn projector_sidecar(layer_index: usize, step: u64) -> String {
    format!("projectors/layer{layer_index}_step{step}.bin")
}

pub(crate) fn write_projector_log(dir: &Path, entries: &[ProjectorLogEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    write_text(&dir.join(PROJECTOR_LOG), &out)
}

pub(crate) fn write_projector_basis(dir: &Path, entry: &ProjectorLogEntry, basis: &Matrix) -> Result<()> {
    write_matrix(&dir.join(&entry.file), basis)
}

pub fn read_projector_log(dir: &Path) -> Result<Vec<ProjectorLogEntry>> {
    let path = dir.join(PROJECTOR_LOG);
    let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

pub fn read_projector_basis(dir: &Path, entry: &ProjectorLogEntry) -> Result<Matrix> {
    read_matrix(&dir.join(&entry.file))
}

/// Describes the files of one checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub step: u64,
    pub config_hash: String,
    pub optimizer: OptimizerKind,
    pub layers: Vec<String>,
    pub state_step_counts: Vec<u64>,
    pub projector_steps: Vec<Option<u64>>,
    pub projector_indices: Vec<Option<Vec<usize>>>,
    pub has_gradient_basis: Vec<bool>,
}

/// Everything needed to continue a run bit-exactly from `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub weights: Vec<Matrix>,
    pub states: Vec<OptimizerState>,
    pub projectors: Vec<Option<Projector>>,
    pub gradient_bases: Vec<Option<Matrix>>,
}

pub fn checkpoint_dir(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("step_{step}"))
}

pub(crate) fn save_checkpoint(run_dir: &Path, ck: &Checkpoint) -> Result<()> {
    let dir = checkpoint_dir(run_dir, ck.manifest.step);
    create_dir(&dir)?;
    for (l, w) in ck.weights.iter().enumerate() {
        write_matrix(&dir.join(format!("weight_{l}.bin")), w)?;
    }
    for (l, st) in ck.states.iter().enumerate() {
        for (name, m) in st.to_matrices() {
            write_matrix(&dir.join(format!("state_{l}_{name}.bin")), &m)?;
        }
    }
    for (l, p) in ck.projectors.iter().enumerate() {
        if let Some(p) = p {
            write_matrix(&dir.join(format!("projector_{l}.bin")), &p.basis)?;
        }
    }
    for (l, b) in ck.gradient_bases.iter().enumerate() {
        if let Some(b) = b {
            write_matrix(&dir.join(format!("gradient_basis_{l}.bin")), b)?;
        }
    }
    write_json(&dir.join("manifest.json"), &ck.manifest)
}

pub fn load_checkpoint_manifest(run_dir: &Path, step: u64) -> Result<CheckpointManifest> {
    let dir = checkpoint_dir(run_dir, step);
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint { step, path: dir });
    }
    read_json(&path)
}

/// Weights only.
pub fn load_checkpoint_weights(run_dir: &Path, step: u64) -> Result<(Vec<String>, Vec<Matrix>)> {
    let manifest = load_checkpoint_manifest(run_dir, step)?;
    let dir = checkpoint_dir(run_dir, step);
    let weights = (0..manifest.layers.len())
        .map(|l| read_matrix(&dir.join(format!("weight_{l}.bin"))))
        .collect::<Result<_>>()?;
    Ok((manifest.layers, weights))
}

pub fn load_checkpoint(run_dir: &Path, step: u64) -> Result<Checkpoint> {
    let manifest = load_checkpoint_manifest(run_dir, step)?;
    let dir = checkpoint_dir(run_dir, step);
    let (_, weights) = load_checkpoint_weights(run_dir, step)?;
    let mut states = Vec::new();
    let mut projectors = Vec::new();
    let mut gradient_bases = Vec::new();
    for l in 0..manifest.layers.len() {
        let st = OptimizerState::from_matrices(manifest.optimizer, manifest.state_step_counts[l], |name| {
            read_matrix(&dir.join(format!("state_{l}_{name}.bin"))).map_err(|e| match e {
                HarnessError::Core(c) => c,
                other => sara_core::Error::InvalidParameter(other.to_string()),
            })
        })?;
        states.push(st);
        let p = match manifest.projector_steps[l] {
            Some(created) => Some(Projector::new(
                read_matrix(&dir.join(format!("projector_{l}.bin")))?,
                manifest.projector_indices[l].clone(),
                created,
            )?),
            None => None,
        };
        projectors.push(p);
        gradient_bases.push(if manifest.has_gradient_basis[l] {
            Some(read_matrix(&dir.join(format!("gradient_basis_{l}.bin")))?)
        } else {
            None
        });
    }
    Ok(Checkpoint {
        manifest,
        weights,
        states,
        projectors,
        gradient_bases,
    })
}
