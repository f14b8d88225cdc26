//! Adam-family updates in projected coordinates.
//!
//! All variants use the plain moment recursions without bias correction:
//! `M ← β₁M + (1−β₁)R`, `V ← β₂V + (1−β₂)R∘R`, step `αP·M/(√V+ξ)`.

use serde::{Deserialize, Serialize};

use super::HyperParams;
use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::subspace::Projector;

/// First and second moments of the projected gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step_count: u64,
}

impl AdamState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step_count: 0,
        }
    }
}

pub(crate) fn check_inputs(x: &Matrix, g: &Matrix, p: Option<&Projector>) -> Result<()> {
    if x.shape() != g.shape() {
        return Err(Error::ShapeMismatch {
            op: "optimizer step (weights vs gradient)",
            lhs: x.shape(),
            rhs: g.shape(),
        });
    }
    if let Some(p) = p {
        if p.dim() != g.rows() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step (projector vs gradient)",
                lhs: p.basis.shape(),
                rhs: g.shape(),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_state(op: &'static str, state: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if state != expected {
        return Err(Error::ShapeMismatch {
            op,
            lhs: state,
            rhs: expected,
        });
    }
    Ok(())
}

/// `M ← β₁M + (1−β₁)R`.
pub(crate) fn update_first_moment(m: &mut Matrix, r: &Matrix, beta1: f64) {
    for (mi, ri) in m.as_mut_slice().iter_mut().zip(r.as_slice()) {
        *mi = beta1 * *mi + (1.0 - beta1) * ri;
    }
}

/// Updates both moments and returns `M / (√V + ξ)`.
fn adam_direction(state: &mut AdamState, r: &Matrix, hp: &HyperParams) -> Matrix {
    update_first_moment(&mut state.m, r, hp.beta1);
    for (vi, ri) in state.v.as_mut_slice().iter_mut().zip(r.as_slice()) {
        *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * ri * ri;
    }
    state.step_count += 1;
    state.m.zip_map(&state.v, |m, v| m / (v.sqrt() + hp.xi))
}

/// Full-rank Adam with the same (uncorrected) recursions, `P = I`.
pub fn full_adam_step(x: &Matrix, g: &Matrix, state: &mut AdamState, hp: &HyperParams) -> Result<Matrix> {
    check_inputs(x, g, None)?;
    check_state("full_adam_step state", state.m.shape(), g.shape())?;
    let dir = adam_direction(state, g, hp);
    x.add_scaled(&dir, -hp.eta * hp.alpha)
}

/// GaLore-Adam: moments live in the `r × n` coordinates `R = PᵀG`.
pub fn galore_adam_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut AdamState,
    hp: &HyperParams,
) -> Result<Matrix> {
    let (_, n) = galore_adam_parts(x, g, p, state, hp)?;
    x.add_scaled(&n, -hp.eta)
}

/// Shared by GaLore and Fira: returns `(R̂, N)` with `R̂ = M/(√V+ξ)` and
/// `N = α P R̂`.
fn galore_adam_parts(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut AdamState,
    hp: &HyperParams,
) -> Result<(Matrix, Matrix)> {
    check_inputs(x, g, Some(p))?;
    check_state("galore state vs projected gradient", state.m.shape(), (p.rank(), g.cols()))?;
    let r = p.project(g)?;
    let rhat = adam_direction(state, &r, hp);
    let n = p.expand(&rhat)?.scale(hp.alpha);
    Ok((rhat, n))
}

/// Fira's residual scaling `φ(S) = (‖N‖_F / (‖R̂‖_F + ξ)) · S`.
pub fn fira_residual_scale(n: &Matrix, rhat: &Matrix, xi: f64) -> f64 {
    n.frobenius_norm() / (rhat.frobenius_norm() + xi)
}

/// Fira-Adam: GaLore-Adam plus the scaled residual `S = (I − PPᵀ)G`.
pub fn fira_adam_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut AdamState,
    hp: &HyperParams,
) -> Result<Matrix> {
    let (rhat, n) = galore_adam_parts(x, g, p, state, hp)?;
    let s = p.residual(g)?;
    let phi = s.scale(fira_residual_scale(&n, &rhat, hp.xi));
    x.add_scaled(&n, -hp.eta)?.add_scaled(&phi, -hp.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{gaussian_matrix, RngStream};
    use crate::subspace::select_random;

    fn hp() -> HyperParams {
        HyperParams {
            eta: 0.1,
            alpha: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            xi: 1e-8,
            ..HyperParams::default()
        }
    }

    #[test]
    fn zero_gradient_keeps_weights() {
        let x = Matrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let mut st = AdamState::zeros(2, 3);
        let out = full_adam_step(&x, &Matrix::zeros(2, 3), &mut st, &hp()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn scalar_hand_evaluation() {
        let x = Matrix::diag(&[1.0]);
        let g = Matrix::diag(&[2.0]);
        let mut st = AdamState::zeros(1, 1);
        let out = full_adam_step(&x, &g, &mut st, &hp()).unwrap();
        assert!((st.m.get(0, 0) - 0.2).abs() < 1e-15);
        assert!((st.v.get(0, 0) - 0.004).abs() < 1e-15);
        let expected = 1.0 - 0.1 * 0.2 / (0.004f64.sqrt() + 1e-8);
        assert!((out.get(0, 0) - expected).abs() < 1e-15);
        assert!((out.get(0, 0) - 0.683772).abs() < 1e-6);

        let mut st = AdamState::zeros(1, 1);
        let p = Projector::identity(1, 0);
        let galore = galore_adam_step(&x, &g, &p, &mut st, &hp()).unwrap();
        assert_eq!(galore, out);
    }

    #[test]
    fn orthogonal_gradient_is_ignored() {
        let p = Projector::new(Matrix::column(&[1.0, 0.0]), None, 0).unwrap();
        let g = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -2.0]]).unwrap();
        let x = Matrix::from_fn(2, 2, |i, j| i as f64 - j as f64);
        let mut st = AdamState::zeros(1, 2);
        assert_eq!(galore_adam_step(&x, &g, &p, &mut st, &hp()).unwrap(), x);
    }

    #[test]
    fn galore_update_stays_in_span() {
        let mut rng = RngStream::new(5, 5);
        let p = select_random(6, 2, &mut rng, 0).unwrap();
        let mut st = AdamState::zeros(2, 4);
        let mut x = gaussian_matrix(&mut rng, 6, 4);
        for _ in 0..20 {
            let g = gaussian_matrix(&mut rng, 6, 4);
            let before_m = st.m.clone();
            let before_v = st.v.clone();
            let next = galore_adam_step(&x, &g, &p, &mut st, &hp()).unwrap();
            let delta = next.sub(&x).unwrap();
            assert!(p.residual(&delta).unwrap().frobenius_norm() <= 1e-12);
            let _ = (before_m, before_v);
            let rhat = st.m.zip_map(&st.v, |m, v| m / (v.sqrt() + 1e-8));
            assert!(delta.frobenius_norm() <= 0.1 * rhat.frobenius_norm() * (1.0 + 1e-12));
            x = next;
        }
    }

    #[test]
    fn galore_identity_matches_full_adam_over_many_steps() {
        let mut rng = RngStream::new(17, 0);
        let p = Projector::identity(4, 0);
        let mut a = AdamState::zeros(4, 3);
        let mut b = AdamState::zeros(4, 3);
        let mut xa = gaussian_matrix(&mut rng, 4, 3);
        let mut xb = xa.clone();
        for _ in 0..100 {
            let g = gaussian_matrix(&mut rng, 4, 3);
            xa = full_adam_step(&xa, &g, &mut a, &hp()).unwrap();
            xb = galore_adam_step(&xb, &g, &p, &mut b, &hp()).unwrap();
            assert!(xa.sub(&xb).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn stale_state_rejected() {
        let p = Projector::identity(3, 0);
        let mut st = AdamState::zeros(2, 2);
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            galore_adam_step(&x, &x, &p, &mut st, &hp()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fira_reduces_to_galore_inside_span() {
        let p = Projector::new(Matrix::column(&[1.0, 0.0]), Some(vec![0]), 0).unwrap();
        let g = Matrix::from_rows(&[vec![2.0, -1.0], vec![0.0, 0.0]]).unwrap();
        let x = Matrix::from_fn(2, 2, |i, j| 0.3 * i as f64 + j as f64);
        let (mut a, mut b) = (AdamState::zeros(1, 2), AdamState::zeros(1, 2));
        let ga = galore_adam_step(&x, &g, &p, &mut a, &hp()).unwrap();
        let fi = fira_adam_step(&x, &g, &p, &mut b, &hp()).unwrap();
        assert_eq!(ga, fi);
    }

    #[test]
    fn fira_first_step_golden() {
        // G = diag(3, 1), P = e₁, zero state, η = 0.1, α = 1.
        // R = [3, 0]; M = [0.3, 0]; V = [0.009, 0]; R̂ = [0.3/(√0.009+ξ), 0].
        // N = [[R̂₀, 0], [0, 0]];  S = [[0, 0], [0, 1]];
        // φ = ‖N‖/(‖R̂‖+ξ) · S = R̂₀/(R̂₀+ξ) · S.
        let p = Projector::new(Matrix::column(&[1.0, 0.0]), Some(vec![0]), 0).unwrap();
        let g = Matrix::diag(&[3.0, 1.0]);
        let x = Matrix::zeros(2, 2);
        let mut st = AdamState::zeros(1, 2);
        let out = fira_adam_step(&x, &g, &p, &mut st, &hp()).unwrap();
        let rhat0 = 0.3 / (0.009f64.sqrt() + 1e-8);
        let phi11 = rhat0 / (rhat0 + 1e-8);
        let expected = Matrix::from_rows(&[vec![-0.1 * rhat0, 0.0], vec![0.0, -0.1 * phi11]]).unwrap();
        assert!(out.sub(&expected).unwrap().max_abs() < 1e-15);
        // pinned decimals
        assert!((out.get(0, 0) - (-0.316227732)).abs() < 1e-8);
        assert!((out.get(1, 1) - (-0.099999999)).abs() < 1e-8);
    }

    #[test]
    fn fira_residual_component_is_phi() {
        let mut rng = RngStream::new(23, 2);
        let p = select_random(5, 2, &mut rng, 0).unwrap();
        let g = gaussian_matrix(&mut rng, 5, 3);
        let x = gaussian_matrix(&mut rng, 5, 3);
        let (mut a, mut b) = (AdamState::zeros(2, 3), AdamState::zeros(2, 3));
        let ga = galore_adam_step(&x, &g, &p, &mut a, &hp()).unwrap();
        let fi = fira_adam_step(&x, &g, &p, &mut b, &hp()).unwrap();
        // the difference is exactly −η φ(S), which lives in the complement
        let diff = fi.sub(&ga).unwrap();
        assert!(p.project(&diff).unwrap().max_abs() < 1e-12);
        let rhat = b.m.zip_map(&b.v, |m, v| m / (v.sqrt() + 1e-8));
        let n = p.expand(&rhat).unwrap();
        let s = p.residual(&g).unwrap();
        let want = s.scale(-0.1 * fira_residual_scale(&n, &rhat, 1e-8));
        assert!(diff.sub(&want).unwrap().max_abs() < 1e-12);
    }
}
