//! Gradient oracles over layered matrix parameters.
//!
//! Layer `l` has shape `m × n_l` with `m ≤ n_l`. The quadratic oracle has an
//! analytic smoothness constant and an almost-surely bounded, mean-zero noise
//! model; the MLP oracle draws its noise from mini-batch resampling.

mod mlp;
mod quadratic;

use serde::{Deserialize, Serialize};

pub use mlp::{BlobDataset, MlpObjective};
pub use quadratic::QuadraticObjective;

use crate::error::{Error, Result};
use crate::matcore::{Matrix, RngStream};

/// Named per-layer weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    pub names: Vec<String>,
    pub layers: Vec<Matrix>,
}

impl LayeredParams {
    pub fn new(names: Vec<String>, layers: Vec<Matrix>) -> Result<Self> {
        if names.len() != layers.len() {
            return Err(Error::InvalidParameter(format!(
                "{} names for {} layers",
                names.len(),
                layers.len()
            )));
        }
        for (name, l) in names.iter().zip(&layers) {
            if l.rows() > l.cols() {
                return Err(Error::InvalidParameter(format!(
                    "layer {name} is {}x{}; layers must satisfy rows <= cols",
                    l.rows(),
                    l.cols()
                )));
            }
        }
        Ok(Self { names, layers })
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Matrix::shape).collect()
    }
}

/// One stochastic gradient draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub grads: Vec<Matrix>,
    pub loss: f64,
    /// `‖G_l − ∇_l f‖_F` per layer, or empty when the oracle does not track
    /// its noise (mini-batch resampling).
    pub noise_norms: Vec<f64>,
}

/// Per-layer almost-sure noise radii `σ_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    pub sigmas: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise radii must be finite and >= 0: {sigmas:?}"
            )));
        }
        Ok(Self { sigmas })
    }

    pub fn uniform(layers: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; layers])
    }

    /// `σ² = Σ_l σ_l²`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigmas.iter().map(|s| s * s).sum()
    }
}

/// A differentiable objective over layered matrices.
pub trait Objective: Send + Sync {
    fn layer_names(&self) -> Vec<String>;
    fn layer_shapes(&self) -> Vec<(usize, usize)>;
    /// Deterministic starting point.
    fn initial_params(&self, seed: u64) -> Vec<Matrix>;
    /// Full objective value.
    fn loss(&self, x: &[Matrix]) -> Result<f64>;
    /// Exact full gradient.
    fn gradient(&self, x: &[Matrix]) -> Result<Vec<Matrix>>;
    /// Stochastic gradient for optimizer step `step`.
    fn sample(&self, x: &[Matrix], step: u64, rng: &mut RngStream) -> Result<GradientSample>;
}

pub(crate) fn check_params(x: &[Matrix], shapes: &[(usize, usize)]) -> Result<()> {
    if x.len() != shapes.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} layers, got {}",
            shapes.len(),
            x.len()
        )));
    }
    for (m, &s) in x.iter().zip(shapes) {
        if m.shape() != s {
            return Err(Error::ShapeMismatch {
                op: "objective parameters",
                lhs: m.shape(),
                rhs: s,
            });
        }
    }
    Ok(())
}

/// Adds bounded noise to an exact gradient: a uniformly random direction with
/// magnitude `min(|z|·σ_l/3, σ_l)`, `z ~ N(0, 1)`.
pub fn noisy_grad(
    objective: &dyn Objective,
    x: &[Matrix],
    spec: &NoiseSpec,
    rng: &mut RngStream,
) -> Result<GradientSample> {
    let grads = objective.gradient(x)?;
    if spec.sigmas.len() != grads.len() {
        return Err(Error::InvalidParameter(format!(
            "noise spec has {} radii for {} layers",
            spec.sigmas.len(),
            grads.len()
        )));
    }
    let mut noise_norms = Vec::with_capacity(grads.len());
    let mut out = Vec::with_capacity(grads.len());
    for (g, &sigma) in grads.into_iter().zip(&spec.sigmas) {
        if sigma == 0.0 {
            noise_norms.push(0.0);
            out.push(g);
            continue;
        }
        let dir = crate::matcore::gaussian_matrix(rng, g.rows(), g.cols());
        let magnitude = (rng.normal().abs() * sigma / 3.0).min(sigma);
        let dir_norm = dir.frobenius_norm();
        let mut e = if dir_norm > 0.0 {
            dir.scale(magnitude / dir_norm)
        } else {
            Matrix::zeros(g.rows(), g.cols())
        };
        // The bound is checked on the noise as recovered from the returned
        // gradient, which differs from `e` by the rounding of `g + e`.
        let mut noisy = g.add_scaled(&e, 1.0)?;
        let mut realized = noisy.sub(&g)?.frobenius_norm();
        let mut shrink = f64::EPSILON;
        while realized > sigma {
            e = e.scale(sigma / realized * (1.0 - shrink));
            noisy = g.add_scaled(&e, 1.0)?;
            realized = noisy.sub(&g)?.frobenius_norm();
            shrink *= 2.0;
        }
        noise_norms.push(realized);
        out.push(noisy);
    }
    Ok(GradientSample {
        grads: out,
        loss: objective.loss(x)?,
        noise_norms,
    })
}

/// Central differences `(f(x + h e) − f(x − h e)) / 2h` per coordinate.
pub fn finite_difference_grad(
    f: impl Fn(&[Matrix]) -> Result<f64>,
    x: &[Matrix],
    h: f64,
) -> Result<Vec<Matrix>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h = {h} must be > 0")));
    }
    let mut work: Vec<Matrix> = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for l in 0..x.len() {
        let (rows, cols) = x[l].shape();
        let mut g = Matrix::zeros(rows, cols);
        for k in 0..rows * cols {
            let orig = work[l].as_slice()[k];
            work[l].as_mut_slice()[k] = orig + h;
            let plus = f(&work)?;
            work[l].as_mut_slice()[k] = orig - h;
            let minus = f(&work)?;
            work[l].as_mut_slice()[k] = orig;
            g.as_mut_slice()[k] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// `max |a − b| / max |b|` across all layers.
pub fn max_relative_deviation(a: &[Matrix], b: &[Matrix]) -> f64 {
    let scale = b.iter().map(Matrix::max_abs).fold(0.0, f64::max);
    let dev = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        dev
    } else {
        dev / scale
    }
}

/// `Σ_l ‖G_l‖_F²`.
pub fn grad_norm_sq(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_sq).sum()
}
