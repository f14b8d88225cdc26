//! Cross-run comparison and checkpoint spectrum diffs.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sara_core::metrics::{update_spectrum, SpectrumReport};

use crate::artifacts::{load_checkpoint_weights, write_text, METRICS_HEADER};
use crate::error::{HarnessError, Result};
use crate::run::RunSummary;

/// One run's headline numbers, with differences against the first run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub source: PathBuf,
    pub config_hash: String,
    pub objective_id: String,
    pub optimizer: String,
    pub selector: String,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub grad_norm_sq_min: Option<f64>,
    pub adjacent_overlap: Option<f64>,
    pub anchor_overlap: Option<f64>,
    /// False when the objective differs from the baseline's.
    pub comparable: bool,
    pub final_loss_delta: Option<f64>,
    pub grad_norm_sq_min_delta: Option<f64>,
    pub adjacent_overlap_delta: Option<f64>,
    pub anchor_overlap_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Seeds present for each `optimizer/selector` group.
    pub seeds: BTreeMap<String, Vec<u64>>,
}

fn diff(a: Option<f64>, base: Option<f64>, comparable: bool) -> Option<f64> {
    match (a, base, comparable) {
        (Some(a), Some(b), true) => Some(a - b),
        _ => None,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn short(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "source,config_hash,objective_id,optimizer,selector,seed,final_loss,grad_norm_sq_min,adjacent_overlap,\
             anchor_overlap,comparable,final_loss_delta,grad_norm_sq_min_delta,adjacent_overlap_delta,anchor_overlap_delta\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.source.display(),
                r.config_hash,
                r.objective_id,
                r.optimizer,
                r.selector,
                r.seed,
                cell(r.final_loss),
                cell(r.grad_norm_sq_min),
                cell(r.adjacent_overlap),
                cell(r.anchor_overlap),
                r.comparable,
                cell(r.final_loss_delta),
                cell(r.grad_norm_sq_min_delta),
                cell(r.adjacent_overlap_delta),
                cell(r.anchor_overlap_delta),
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<24} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "run", "seed", "final_loss", "d_loss", "min|g|^2", "adj_ovl", "anchor_ovl"
        );
        for r in &self.rows {
            let name = format!("{}/{}", r.optimizer, r.selector);
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}{}",
                name,
                r.seed,
                short(r.final_loss),
                short(r.final_loss_delta),
                short(r.grad_norm_sq_min),
                short(r.adjacent_overlap),
                short(r.anchor_overlap),
                if r.comparable { "" } else { "  [objective mismatch]" }
            );
        }
        for (group, seeds) in &self.seeds {
            let _ = writeln!(out, "{group}: seeds {seeds:?}");
        }
        out
    }
}

/// Loads run summaries and tabulates them against the first one.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.len() < 2 {
        return Err(HarnessError::TooFewRuns(paths.len()));
    }
    let summaries = paths
        .iter()
        .map(|p| {
            if !p.exists() {
                return Err(HarnessError::MissingFile(p.clone()));
            }
            RunSummary::load(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let base = &summaries[0];
    let mut seeds: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let rows = summaries
        .iter()
        .zip(paths)
        .map(|(s, p)| {
            let comparable = s.objective_id == base.objective_id;
            let group = format!("{}/{}", s.optimizer.name(), s.selector.name());
            seeds.entry(group).or_default().push(s.seed);
            ComparisonRow {
                source: p.clone(),
                config_hash: s.config_hash.clone(),
                objective_id: s.objective_id.clone(),
                optimizer: s.optimizer.name().to_string(),
                selector: s.selector.name().to_string(),
                seed: s.seed,
                final_loss: s.final_loss,
                grad_norm_sq_min: s.grad_norm_sq_min,
                adjacent_overlap: s.overall_adjacent_overlap(),
                anchor_overlap: s.overall_anchor_overlap(),
                comparable,
                final_loss_delta: diff(s.final_loss, base.final_loss, comparable),
                grad_norm_sq_min_delta: diff(s.grad_norm_sq_min, base.grad_norm_sq_min, comparable),
                adjacent_overlap_delta: diff(
                    s.overall_adjacent_overlap(),
                    base.overall_adjacent_overlap(),
                    comparable,
                ),
                anchor_overlap_delta: diff(s.overall_anchor_overlap(), base.overall_anchor_overlap(), comparable),
            }
        })
        .collect();
    for v in seeds.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    Ok(Comparison { rows, seeds })
}

pub fn spectrum_file(a: u64, b: u64) -> String {
    format!("spectrum_{a}_{b}.csv")
}

/// Singular spectrum of `W_b − W_a` per layer from two saved checkpoints,
/// also written to `spectrum_{a}_{b}.csv` in the run directory.
pub fn checkpoint_diff(run_dir: &Path, a: u64, b: u64) -> Result<Vec<SpectrumReport>> {
    let (names, wa) = load_checkpoint_weights(run_dir, a)?;
    let (_, wb) = load_checkpoint_weights(run_dir, b)?;
    let reports = update_spectrum(&names, &wa, &wb)?;
    let mut csv = format!("{METRICS_HEADER}\n");
    for r in &reports {
        csv.push_str(&r.to_csv_rows(b));
    }
    write_text(&run_dir.join(spectrum_file(a, b)), &csv)?;
    Ok(reports)
}
