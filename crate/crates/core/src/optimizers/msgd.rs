//! Low-rank momentum SGD with momentum re-projection at subspace refreshes.

use serde::{Deserialize, Serialize};

use super::adam::{check_inputs, check_state};
use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::subspace::Projector;

/// Momentum stored in low-rank coordinates (`M̃ = P · m_lr`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub m_lr: Matrix,
    pub step_count: u64,
}

impl MomentumState {
    pub fn zeros(rank: usize, cols: usize) -> Self {
        Self {
            m_lr: Matrix::zeros(rank, cols),
            step_count: 0,
        }
    }
}

/// One MSGD step.
///
/// On a refresh the stored momentum is first carried into the new
/// coordinates, `m ← P_newᵀ P_old m`. Then `m ← (1−β₁)m + β₁ PᵀG` and
/// `x ← x − η P m`.
#[allow(clippy::too_many_arguments)]
pub fn msgd_sara_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    prev_p: Option<&Projector>,
    state: &mut MomentumState,
    eta: f64,
    beta1: f64,
    refreshed: bool,
) -> Result<Matrix> {
    check_inputs(x, g, Some(p))?;
    if refreshed {
        let prev = prev_p.ok_or(Error::MissingProjector { step: state.step_count })?;
        check_state("msgd momentum vs previous projector", state.m_lr.shape(), (prev.rank(), g.cols()))?;
        state.m_lr = p.project(&prev.expand(&state.m_lr)?)?;
    }
    check_state("msgd momentum vs projector", state.m_lr.shape(), (p.rank(), g.cols()))?;
    let r = p.project(g)?;
    for (mi, ri) in state.m_lr.as_mut_slice().iter_mut().zip(r.as_slice()) {
        *mi = (1.0 - beta1) * *mi + beta1 * ri;
    }
    state.step_count += 1;
    x.add_scaled(&p.expand(&state.m_lr)?, -eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{gaussian_matrix, RngStream};
    use crate::subspace::select_random;

    #[test]
    fn zero_gradient_decays_geometrically() {
        let p = Projector::identity(2, 0);
        let mut st = MomentumState {
            m_lr: Matrix::from_rows(&[vec![1.0], vec![-2.0]]).unwrap(),
            step_count: 0,
        };
        let g = Matrix::zeros(2, 1);
        let mut x = Matrix::zeros(2, 1);
        let beta1 = 0.3;
        for k in 1..=5 {
            x = msgd_sara_step(&x, &g, &p, None, &mut st, 0.1, beta1, false).unwrap();
            let f = (1.0 - beta1).powi(k);
            assert!((st.m_lr.get(0, 0) - f).abs() < 1e-15);
            assert!((st.m_lr.get(1, 0) + 2.0 * f).abs() < 1e-15);
        }
    }

    #[test]
    fn refresh_with_same_projector_is_a_no_op() {
        let mut rng = RngStream::new(2, 2);
        let p = select_random(5, 2, &mut rng, 0).unwrap();
        let g = gaussian_matrix(&mut rng, 5, 3);
        let x = gaussian_matrix(&mut rng, 5, 3);
        let m0 = gaussian_matrix(&mut rng, 2, 3);
        let mut a = MomentumState { m_lr: m0.clone(), step_count: 4 };
        let mut b = MomentumState { m_lr: m0, step_count: 4 };
        let xa = msgd_sara_step(&x, &g, &p, Some(&p), &mut a, 0.1, 0.2, true).unwrap();
        let xb = msgd_sara_step(&x, &g, &p, None, &mut b, 0.1, 0.2, false).unwrap();
        assert!(xa.sub(&xb).unwrap().max_abs() < 1e-12);
        assert!(a.m_lr.sub(&b.m_lr).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn orthogonal_refresh_clears_momentum() {
        let old = Projector::new(Matrix::identity(4).select_columns(&[0, 1]), Some(vec![0, 1]), 0).unwrap();
        let new = Projector::new(Matrix::identity(4).select_columns(&[2, 3]), Some(vec![2, 3]), 5).unwrap();
        let mut st = MomentumState {
            m_lr: Matrix::from_fn(2, 3, |i, j| (i + j + 1) as f64),
            step_count: 5,
        };
        let g = Matrix::zeros(4, 3);
        let x = Matrix::zeros(4, 3);
        let out = msgd_sara_step(&x, &g, &new, Some(&old), &mut st, 0.1, 0.5, true).unwrap();
        assert_eq!(st.m_lr.max_abs(), 0.0);
        assert_eq!(out, x);
    }

    #[test]
    fn missing_previous_projector_on_refresh() {
        let p = Projector::identity(2, 0);
        let mut st = MomentumState::zeros(2, 2);
        let x = Matrix::zeros(2, 2);
        assert!(matches!(
            msgd_sara_step(&x, &x, &p, None, &mut st, 0.1, 0.5, true),
            Err(Error::MissingProjector { .. })
        ));
    }

    #[test]
    fn square_orthogonal_projector_is_rotated_momentum_sgd() {
        // P square orthogonal, never refreshed: x − η P m_lr = x − η m_full.
        let mut rng = RngStream::new(90, 0);
        let p = select_random(4, 4, &mut rng, 0).unwrap();
        let a = gaussian_matrix(&mut rng, 4, 4).scale(0.5);
        let b = gaussian_matrix(&mut rng, 4, 3);
        let grad = |x: &Matrix| a.t_matmul(&a.matmul(x).unwrap().sub(&b).unwrap()).unwrap();
        let loss = |x: &Matrix| 0.5 * a.matmul(x).unwrap().sub(&b).unwrap().sum_sq();
        let mut st = MomentumState::zeros(4, 3);
        let mut x_lr = Matrix::zeros(4, 3);
        let mut x_full = Matrix::zeros(4, 3);
        let mut m_full = Matrix::zeros(4, 3);
        let (eta, beta1) = (0.05, 0.2);
        for _ in 0..500 {
            let g = grad(&x_lr);
            x_lr = msgd_sara_step(&x_lr, &g, &p, None, &mut st, eta, beta1, false).unwrap();
            let gf = grad(&x_full);
            m_full = m_full.scale(1.0 - beta1).add_scaled(&gf, beta1).unwrap();
            x_full = x_full.add_scaled(&m_full, -eta).unwrap();
            assert!((loss(&x_lr) - loss(&x_full)).abs() <= 1e-9);
        }
    }
}
