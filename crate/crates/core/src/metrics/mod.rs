//! Subspace overlap and update-spectrum diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{svd, Matrix};

/// Orthonormality tolerance for metric inputs.
pub const OVERLAP_TOL: f64 = 1e-8;

/// `‖UᵀV‖_F² / r` for orthonormal `U, V ∈ ℝ^{m×r}`.
pub fn subspace_overlap(u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "subspace_overlap",
            lhs: u.shape(),
            rhs: v.shape(),
        });
    }
    for basis in [u, v] {
        let deviation = basis.orthonormality_deviation();
        if deviation > OVERLAP_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
    }
    let r = u.cols();
    if r == 0 {
        return Err(Error::InvalidMatrix("overlap of empty bases".into()));
    }
    Ok((u.t_matmul(v)?.sum_sq() / r as f64).clamp(0.0, 1.0))
}

/// One logged projector basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorRecord {
    pub step: u64,
    pub layer: String,
    pub basis: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapPoint {
    pub step: u64,
    pub layer: String,
    pub value: f64,
}

/// `(step, layer, overlap)` triples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OverlapSeries {
    pub points: Vec<OverlapPoint>,
}

impl OverlapSeries {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.points.is_empty() {
            None
        } else {
            Some(self.points.iter().map(|p| p.value).sum::<f64>() / self.points.len() as f64)
        }
    }

    pub fn for_layer(&self, layer: &str) -> Vec<&OverlapPoint> {
        self.points.iter().filter(|p| p.layer == layer).collect()
    }

    /// `step,layer,metric,value` rows without a header.
    pub fn to_csv_rows(&self, metric: &str) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{:?}", p.step, p.layer, metric, p.value);
        }
        out
    }
}

fn by_layer(log: &[ProjectorRecord]) -> Result<BTreeMap<&str, Vec<&ProjectorRecord>>> {
    let mut layers: BTreeMap<&str, Vec<&ProjectorRecord>> = BTreeMap::new();
    for rec in log {
        layers.entry(rec.layer.as_str()).or_default().push(rec);
    }
    for (name, recs) in &layers {
        if recs.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(Error::InvalidParameter(format!(
                "projector log for layer {name} is not strictly sorted by step"
            )));
        }
    }
    Ok(layers)
}

/// Overlap between consecutive logged projectors of each layer, reported at
/// the later step.
pub fn adjacent_overlap(log: &[ProjectorRecord]) -> Result<OverlapSeries> {
    let mut points = Vec::new();
    for (layer, recs) in by_layer(log)? {
        for w in recs.windows(2) {
            points.push(OverlapPoint {
                step: w[1].step,
                layer: layer.to_string(),
                value: subspace_overlap(&w[0].basis, &w[1].basis)?,
            });
        }
    }
    Ok(OverlapSeries { points })
}

/// Overlap of each layer's projector at `anchor_step` with every projector
/// logged at or after it.
pub fn anchor_overlap(log: &[ProjectorRecord], anchor_step: u64) -> Result<OverlapSeries> {
    let mut points = Vec::new();
    for (layer, recs) in by_layer(log)? {
        let anchor = recs.iter().find(|r| r.step == anchor_step).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "anchor step {anchor_step} is not in the projector log for layer {layer}"
            ))
        })?;
        for rec in recs.iter().filter(|r| r.step >= anchor_step) {
            points.push(OverlapPoint {
                step: rec.step,
                layer: layer.to_string(),
                value: subspace_overlap(&anchor.basis, &rec.basis)?,
            });
        }
    }
    Ok(OverlapSeries { points })
}

/// Normalized singular values of a weight difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub layer: String,
    pub normalized: Vec<f64>,
    pub stable_rank: f64,
}

impl SpectrumReport {
    /// One `step,layer,metric,value` row per singular-value index, then the
    /// stable rank.
    pub fn to_csv_rows(&self, step: u64) -> String {
        let mut out = String::new();
        for (i, v) in self.normalized.iter().enumerate() {
            let _ = writeln!(out, "{step},{},normalized_sv_{i},{v:?}", self.layer);
        }
        let _ = writeln!(out, "{step},{},stable_rank,{:?}", self.layer, self.stable_rank);
        out
    }
}

/// Spectrum of `b − a` for one layer. A zero difference gives an all-zero
/// spectrum with stable rank 0.
pub fn layer_spectrum(layer: &str, a: &Matrix, b: &Matrix) -> Result<SpectrumReport> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "update_spectrum",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let delta = b.sub(a)?;
    let s = svd(&delta)?.s;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(SpectrumReport {
            layer: layer.to_string(),
            normalized: vec![0.0; s.len()],
            stable_rank: 0.0,
        });
    }
    let normalized: Vec<f64> = s.iter().map(|v| (v / top).clamp(0.0, 1.0)).collect();
    let stable_rank = (delta.sum_sq() / (top * top)).clamp(1.0, s.len() as f64);
    Ok(SpectrumReport {
        layer: layer.to_string(),
        normalized,
        stable_rank,
    })
}

/// Per-layer spectra of `w_b − w_a`.
pub fn update_spectrum(names: &[String], w_a: &[Matrix], w_b: &[Matrix]) -> Result<Vec<SpectrumReport>> {
    if w_a.len() != w_b.len() || names.len() != w_a.len() {
        return Err(Error::InvalidParameter(format!(
            "checkpoint layer counts differ: {} names, {} and {} layers",
            names.len(),
            w_a.len(),
            w_b.len()
        )));
    }
    names
        .iter()
        .zip(w_a.iter().zip(w_b))
        .map(|(n, (a, b))| layer_spectrum(n, a, b))
        .collect()
}
