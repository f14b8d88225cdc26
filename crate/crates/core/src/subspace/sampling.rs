//! Weighted sampling without replacement and the inclusion probabilities it
//! induces.
//!
//! Draws follow the successive-sampling law: the k-th index is picked with
//! probability `w_i / (1 - w_{i_1} - ... - w_{i_{k-1}})` among those not yet
//! drawn. Once every positive-weight index has been drawn, the remaining
//! slots are filled uniformly from the zero-weight indices.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::RngStream;

/// Largest `m` for which exact inclusion probabilities are enumerated.
pub const EXACT_MAX_M: usize = 12;

const SUM_TOL: f64 = 1e-12;

/// Normalized, nonnegative sampling weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights(Vec<f64>);

impl SelectionWeights {
    /// Accepts weights already on the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0 || **w > 1.0)
        {
            return Err(Error::InvalidWeights(format!("weight {i} = {w} outside [0, 1]")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    /// `m` equal weights.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// `ω_i = S_i / Σ_j S_j`; an all-zero spectrum maps to uniform weights.
pub fn singular_weights(s: &[f64]) -> Result<SelectionWeights> {
    if s.is_empty() {
        return Err(Error::InvalidWeights("no singular values".into()));
    }
    if let Some((i, v)) = s.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "singular value {i} = {v} is negative or non-finite"
        )));
    }
    let total: f64 = s.iter().sum();
    if total == 0.0 {
        return Ok(SelectionWeights::uniform(s.len()));
    }
    Ok(SelectionWeights(s.iter().map(|v| v / total).collect()))
}

/// Draws `r` distinct indices and returns them sorted ascending.
///
/// Uses exponential keys (`E_i / ω_i`, smallest `r` win), which realizes the
/// successive-sampling law in `O(m log m)`.
pub fn sample_without_replacement(
    w: &SelectionWeights,
    r: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let m = w.len();
    if r > m {
        return Err(Error::SampleTooLarge {
            requested: r,
            available: m,
        });
    }
    // (tier, key, index): positive weights in tier 0, zero weights in tier 1.
    let mut keys: Vec<(u8, f64, usize)> = w
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &wi)| {
            if wi > 0.0 {
                (0, rng.exponential() / wi, i)
            } else {
                (1, rng.uniform(), i)
            }
        })
        .collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    let mut picked: Vec<usize> = keys.iter().take(r).map(|k| k.2).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Probability that the first `|S|` draws of the successive-sampling law are
/// exactly the set `S`, for every `S` with `|S| ≤ r`, indexed by bitmask.
fn prefix_set_probabilities(w: &[f64], r: usize) -> Vec<f64> {
    let m = w.len();
    let mut prob = vec![0.0; 1 << m];
    prob[0] = 1.0;
    for mask in 0..(1usize << m) {
        let p = prob[mask];
        if p == 0.0 || mask.count_ones() as usize >= r {
            continue;
        }
        let free: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) == 0).collect();
        let mass: f64 = free.iter().map(|&j| w[j]).sum();
        for &j in &free {
            let step = if mass > 0.0 { w[j] / mass } else { 1.0 / free.len() as f64 };
            if step > 0.0 {
                prob[mask | (1 << j)] += p * step;
            }
        }
    }
    prob
}

/// `(sorted indices, probability)` for each reachable size-`r` sample.
fn final_sets(w: &[f64], r: usize) -> impl Iterator<Item = (Vec<usize>, f64)> {
    let m = w.len();
    prefix_set_probabilities(w, r)
        .into_iter()
        .enumerate()
        .filter(move |(mask, p)| *p > 0.0 && mask.count_ones() as usize == r)
        .map(move |(mask, p)| ((0..m).filter(|&j| mask & (1 << j) != 0).collect(), p))
}

fn check_exact(w: &SelectionWeights, r: usize) -> Result<()> {
    if w.len() > EXACT_MAX_M {
        return Err(Error::ExactTooLarge {
            m: w.len(),
            max: EXACT_MAX_M,
        });
    }
    if r > w.len() {
        return Err(Error::SampleTooLarge {
            requested: r,
            available: w.len(),
        });
    }
    Ok(())
}

/// Exact distribution over unordered (sorted) samples.
pub fn exact_sample_distribution(
    w: &SelectionWeights,
    r: usize,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    check_exact(w, r)?;
    Ok(final_sets(w.as_slice(), r).collect())
}

/// How inclusion probabilities are obtained.
pub enum InclusionMethod<'a> {
    /// Full enumeration of ordered draws; `m ≤ 12`.
    Exact,
    /// Empirical frequencies over `trials` draws.
    MonteCarlo {
        trials: usize,
        rng: &'a mut RngStream,
    },
}

/// `p(i) = P(i ∈ sample)` for each index.
pub fn inclusion_probabilities(
    w: &SelectionWeights,
    r: usize,
    method: InclusionMethod<'_>,
) -> Result<Vec<f64>> {
    match method {
        InclusionMethod::Exact => {
            check_exact(w, r)?;
            let mut p = vec![0.0; w.len()];
            for (set, prob) in final_sets(w.as_slice(), r) {
                for i in set {
                    p[i] += prob;
                }
            }
            Ok(p.into_iter().map(|v: f64| v.min(1.0)).collect())
        }
        InclusionMethod::MonteCarlo { trials, rng } => {
            if trials == 0 {
                return Err(Error::InvalidParameter("Monte Carlo needs trials > 0".into()));
            }
            let mut counts = vec![0u64; w.len()];
            for _ in 0..trials {
                for i in sample_without_replacement(w, r, rng)? {
                    counts[i] += 1;
                }
            }
            Ok(counts.iter().map(|&c| c as f64 / trials as f64).collect())
        }
    }
}

/// Binomial standard error of a Monte Carlo inclusion estimate.
pub fn monte_carlo_stderr(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// `δ = min_i p(i)`.
pub fn min_inclusion_probability(
    w: &SelectionWeights,
    r: usize,
    method: InclusionMethod<'_>,
) -> Result<f64> {
    let p = inclusion_probabilities(w, r, method)?;
    Ok(p.into_iter().fold(f64::INFINITY, f64::min))
}
