//! Subspace selection: dominant, importance-sampled (SARA) and random
//! orthonormal projectors, plus the periodic refresh rule.

mod sampling;

use serde::{Deserialize, Serialize};

pub use sampling::{
    exact_sample_distribution, inclusion_probabilities, min_inclusion_probability,
    monte_carlo_stderr, sample_without_replacement, singular_weights, InclusionMethod,
    SelectionWeights, EXACT_MAX_M,
};

use crate::error::{Error, Result};
use crate::matcore::{gaussian_matrix, qr_orthonormal, svd, Matrix, RngStream};

/// Orthonormality tolerance for freshly built projectors.
pub const BASIS_TOL: f64 = 1e-10;

/// An `m × r` orthonormal basis and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub basis: Matrix,
    /// Columns of the SVD's `U` this basis was taken from, ascending.
    pub source_indices: Option<Vec<usize>>,
    pub created_at_step: u64,
}

impl Projector {
    pub fn new(basis: Matrix, source_indices: Option<Vec<usize>>, created_at_step: u64) -> Result<Self> {
        let dev = basis.orthonormality_deviation();
        if dev > BASIS_TOL {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        if let Some(idx) = &source_indices {
            if idx.len() != basis.cols() || idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "source indices {idx:?} must be {} strictly increasing entries",
                    basis.cols()
                )));
            }
        }
        Ok(Self {
            basis,
            source_indices,
            created_at_step,
        })
    }

    /// Identity projector (`r = m`).
    pub fn identity(m: usize, step: u64) -> Self {
        Self {
            basis: Matrix::identity(m),
            source_indices: Some((0..m).collect()),
            created_at_step: step,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// `Pᵀ G`.
    pub fn project(&self, g: &Matrix) -> Result<Matrix> {
        self.basis.t_matmul(g)
    }

    /// `P X`.
    pub fn expand(&self, x: &Matrix) -> Result<Matrix> {
        self.basis.matmul(x)
    }

    /// `(I − P Pᵀ) G`.
    pub fn residual(&self, g: &Matrix) -> Result<Matrix> {
        g.sub(&self.expand(&self.project(g)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Dominant,
    Sara,
    #[serde(alias = "random")]
    RandomOrthonormal,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Dominant => "dominant",
            SelectorKind::Sara => "sara",
            SelectorKind::RandomOrthonormal => "random_orthonormal",
        }
    }
}

/// Selector, rank `r` and refresh period `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub kind: SelectorKind,
    pub rank: usize,
    pub refresh_period: u64,
}

impl SelectorSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.rank == 0 || self.rank > m {
            return Err(Error::InvalidParameter(format!(
                "rank {} must lie in [1, {m}]",
                self.rank
            )));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidParameter("refresh period must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_rank(g: &Matrix, r: usize) -> Result<()> {
    let k = g.rows().min(g.cols());
    if r == 0 || r > k {
        return Err(Error::InvalidParameter(format!(
            "rank {r} not in [1, {k}] for a {}x{} gradient",
            g.rows(),
            g.cols()
        )));
    }
    Ok(())
}

/// Importance-sampled selection: `r` left singular vectors drawn without
/// replacement with probability proportional to their singular values.
pub fn select_sara(g: &Matrix, r: usize, rng: &mut RngStream, step: u64) -> Result<Projector> {
    check_rank(g, r)?;
    let f = svd(g)?;
    let w = singular_weights(&f.s)?;
    let idx = sample_without_replacement(&w, r, rng)?;
    Ok(Projector {
        basis: f.u.select_columns(&idx),
        source_indices: Some(idx),
        created_at_step: step,
    })
}

/// Top-`r` left singular vectors.
pub fn select_dominant(g: &Matrix, r: usize, step: u64) -> Result<Projector> {
    check_rank(g, r)?;
    let f = svd(g)?;
    let idx: Vec<usize> = (0..r).collect();
    Ok(Projector {
        basis: f.u.select_columns(&idx),
        source_indices: Some(idx),
        created_at_step: step,
    })
}

/// Orthonormalized Gaussian `m × r` basis.
pub fn select_random(m: usize, r: usize, rng: &mut RngStream, step: u64) -> Result<Projector> {
    if r == 0 || r > m {
        return Err(Error::InvalidParameter(format!("rank {r} not in [1, {m}]")));
    }
    let basis = qr_orthonormal(&gaussian_matrix(rng, m, r))?;
    Ok(Projector {
        basis,
        source_indices: None,
        created_at_step: step,
    })
}

/// Dispatches to the selector on refresh steps (`step mod τ = 0`); otherwise
/// hands back `prev` unchanged.
pub fn refresh_projector(
    spec: &SelectorSpec,
    g: &Matrix,
    prev: Option<&Projector>,
    step: u64,
    rng: &mut RngStream,
) -> Result<Projector> {
    if spec.refresh_period == 0 {
        return Err(Error::InvalidParameter("refresh period must be >= 1".into()));
    }
    if step % spec.refresh_period != 0 {
        return prev.cloned().ok_or(Error::MissingProjector { step });
    }
    match spec.kind {
        SelectorKind::Dominant => select_dominant(g, spec.rank, step),
        SelectorKind::Sara => select_sara(g, spec.rank, rng, step),
        SelectorKind::RandomOrthonormal => select_random(g.rows(), spec.rank, rng, step),
    }
}

/// Whether `step` triggers a fresh selection under period `τ`.
pub fn is_refresh_step(step: u64, refresh_period: u64) -> bool {
    refresh_period > 0 && step % refresh_period == 0
}
