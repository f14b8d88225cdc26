//! Convergence-theory helpers: the MSGD-SARA hyperparameter schedule, its
//! horizon precondition, and Monte Carlo checks of the projection-error bound.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{svd, Matrix, RngStream};
use crate::subspace::{
    min_inclusion_probability, sample_without_replacement, select_random, singular_weights,
    InclusionMethod, Projector, SelectionWeights, SelectorKind, EXACT_MAX_M,
};

/// Slack, relative to `‖G‖_F²`, allowed on the right-hand side of the
/// projection bound to absorb floating-point rounding when the bound is
/// attained exactly.
pub const BOUND_ROUNDING_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Delta")]
    pub delta_gap: f64,
    pub sigma_sq: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub t: u64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidParameter(format!("L = {} must be > 0", self.l)));
        }
        if !(self.delta_gap >= 0.0 && self.delta_gap.is_finite()) {
            return Err(Error::InvalidParameter(format!("Delta = {} must be >= 0", self.delta_gap)));
        }
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_sq = {} must be >= 0", self.sigma_sq)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {} must lie in (0, 1]", self.delta)));
        }
        if self.t == 0 {
            return Err(Error::InvalidParameter("T must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub beta1: f64,
    pub tau: u64,
    pub eta: f64,
}

/// `2 + 128/(3δ) + (128σ)²/(9√δ L Δ)`.
pub fn horizon_threshold(p: &TheoryParams) -> Result<f64> {
    p.validate()?;
    let noise_term = if p.sigma_sq == 0.0 {
        0.0
    } else if p.delta_gap == 0.0 {
        return Err(Error::InvalidParameter(
            "Delta = 0 with sigma_sq > 0 makes the horizon bound undefined".into(),
        ));
    } else {
        128.0 * 128.0 * p.sigma_sq / (9.0 * p.delta.sqrt() * p.l * p.delta_gap)
    };
    Ok(2.0 + 128.0 / (3.0 * p.delta) + noise_term)
}

pub fn admissible_horizon(p: &TheoryParams) -> Result<bool> {
    Ok(p.t as f64 >= horizon_threshold(p)?)
}

/// `β₁`, `τ` and `η` from their closed forms, in that order.
pub fn schedule_from_theorem(p: &TheoryParams) -> Result<Schedule> {
    let threshold = horizon_threshold(p)?;
    if (p.t as f64) < threshold {
        return Err(Error::InadmissibleHorizon { t: p.t, threshold });
    }
    let (l, d) = (p.l, p.delta);
    let beta1 = if p.sigma_sq == 0.0 {
        1.0
    } else {
        1.0 / (1.0 + (d.powf(1.5) * p.sigma_sq * p.t as f64 / (l * p.delta_gap)).sqrt())
    };
    let tau_real = 64.0 / (3.0 * d * beta1);
    let tau = tau_real.ceil() as u64;
    let tf = tau as f64;
    let eta = 1.0
        / (4.0 * l
            + (80.0 * l * l / (3.0 * d * beta1 * beta1) + 80.0 * tf * tf * l * l / (3.0 * d)).sqrt()
            + (16.0 * tf * l * l / (3.0 * beta1)).sqrt());
    Ok(Schedule { beta1, tau, eta })
}

/// `min{1/(4L), √(3δβ₁²/(80L²)), √(3δ/(80τ²L²)), √(3β₁/(16τL²))}`.
pub fn step_size_cap(p: &TheoryParams, s: &Schedule) -> f64 {
    let (l, d, b) = (p.l, p.delta, s.beta1);
    let tau = s.tau as f64;
    [
        1.0 / (4.0 * l),
        (3.0 * d * b * b / (80.0 * l * l)).sqrt(),
        (3.0 * d / (80.0 * tau * tau * l * l)).sqrt(),
        (3.0 * b / (16.0 * tau * l * l)).sqrt(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Inputs and outputs of a schedule computation, for JSON emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub params: TheoryParams,
    pub threshold: f64,
    pub admissible: bool,
    pub schedule: Option<Schedule>,
    pub eta_cap: Option<f64>,
}

pub fn schedule_report(p: &TheoryParams) -> Result<ScheduleReport> {
    let threshold = horizon_threshold(p)?;
    let admissible = p.t as f64 >= threshold;
    let schedule = if admissible { Some(schedule_from_theorem(p)?) } else { None };
    Ok(ScheduleReport {
        params: *p,
        threshold,
        admissible,
        eta_cap: schedule.as_ref().map(|s| step_size_cap(p, s)),
        schedule,
    })
}

/// δ of the sampling law induced by `weights`: exact for `m ≤ 12`, otherwise
/// a Monte Carlo estimate over `trials` draws.
pub fn delta_of_weights(
    weights: &SelectionWeights,
    r: usize,
    trials: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if weights.len() <= EXACT_MAX_M {
        min_inclusion_probability(weights, r, InclusionMethod::Exact)
    } else {
        min_inclusion_probability(weights, r, InclusionMethod::MonteCarlo { trials, rng })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBoundReport {
    pub selector: SelectorKind,
    pub rank: usize,
    pub trials: usize,
    pub delta: f64,
    pub grad_norm_sq: f64,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Monte Carlo estimate of `E‖(I − PPᵀ)G‖_F²` over fresh projector draws at a
/// fixed `G`, against `(1 − δ)‖G‖_F²` with δ from `G`'s singular weights.
pub fn verify_projection_bound(
    selector: SelectorKind,
    g: &Matrix,
    r: usize,
    trials: usize,
    rng: &mut RngStream,
) -> Result<ProjectionBoundReport> {
    if selector == SelectorKind::Dominant {
        return Err(Error::Unsupported(
            "the projection bound concerns randomized selection; dominant selection has no sampling law".into(),
        ));
    }
    if trials < 10_000 {
        return Err(Error::InvalidParameter(format!("trials = {trials} must be >= 10000")));
    }
    let m = g.rows();
    if r == 0 || r > m {
        return Err(Error::InvalidParameter(format!("rank {r} not in [1, {m}]")));
    }
    let f = svd(g)?;
    let weights = singular_weights(&f.s)?;
    let delta = delta_of_weights(&weights, r, trials, rng)?;
    let base = rng.next_u64();
    let residual = |i: usize| -> Result<f64> {
        let mut trial_rng = RngStream::derive(base, &[i as u64]);
        let p = match selector {
            SelectorKind::Sara => {
                let idx = sample_without_replacement(&weights, r, &mut trial_rng)?;
                Projector::new(f.u.select_columns(&idx), Some(idx), 0)?
            }
            _ => select_random(m, r, &mut trial_rng, 0)?,
        };
        Ok(p.residual(g)?.sum_sq())
    };
    let values: Vec<f64> = (0..trials).into_par_iter().map(residual).collect::<Result<_>>()?;
    let n = trials as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    let grad_norm_sq = g.sum_sq();
    let rhs = (1.0 - delta) * grad_norm_sq;
    let pass = mean <= rhs + BOUND_ROUNDING_SLACK * grad_norm_sq + 3.0 * stderr;
    Ok(ProjectionBoundReport {
        selector,
        rank: r,
        trials,
        delta,
        grad_norm_sq,
        lhs_mean: mean,
        lhs_stderr: stderr,
        rhs,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComparison {
    pub delta_sara: f64,
    pub delta_uniform: f64,
    pub gap: f64,
    /// Standard error of `delta_sara` when it was estimated by Monte Carlo.
    pub stderr: Option<f64>,
}

/// SARA's δ against the uniform baseline `r/m`.
pub fn compare_delta(
    weights: &SelectionWeights,
    r: usize,
    method: InclusionMethod<'_>,
) -> Result<DeltaComparison> {
    let m = weights.len();
    if r == 0 || r > m {
        return Err(Error::InvalidParameter(format!("rank {r} not in [1, {m}]")));
    }
    let delta_uniform = r as f64 / m as f64;
    let (delta_sara, stderr) = match method {
        _ if weights.is_uniform() => (delta_uniform, None),
        InclusionMethod::Exact => (min_inclusion_probability(weights, r, InclusionMethod::Exact)?, None),
        InclusionMethod::MonteCarlo { trials, rng } => {
            let d = min_inclusion_probability(weights, r, InclusionMethod::MonteCarlo { trials, rng })?;
            (d, Some(crate::subspace::monte_carlo_stderr(d, trials)))
        }
    };
    Ok(DeltaComparison {
        delta_sara,
        delta_uniform,
        gap: delta_uniform - delta_sara,
        stderr,
    })
}
