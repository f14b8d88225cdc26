//! Memory-lean second moments: Adafactor's rank-1 factorization and
//! Adam-mini's one scalar per row.

use serde::{Deserialize, Serialize};

use super::adam::{check_inputs, check_state, update_first_moment};
use super::HyperParams;
use crate::error::Result;
use crate::matcore::Matrix;
use crate::subspace::Projector;

/// Row and column accumulators of `R∘R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredSecondMoment {
    pub row_acc: Vec<f64>,
    pub col_acc: Vec<f64>,
    pub step_count: u64,
}

impl FactoredSecondMoment {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            row_acc: vec![0.0; rows],
            col_acc: vec![0.0; cols],
            step_count: 0,
        }
    }

    /// `V̂_ij = row_i · col_j / Σ_k row_k` (zero when the accumulators are).
    pub fn reconstruct(&self) -> Matrix {
        let total: f64 = self.row_acc.iter().sum();
        Matrix::from_fn(self.row_acc.len(), self.col_acc.len(), |i, j| {
            if total > 0.0 {
                self.row_acc[i] * self.col_acc[j] / total
            } else {
                0.0
            }
        })
    }

    fn update(&mut self, r: &Matrix, beta2: f64) {
        let (rows, cols) = r.shape();
        let mut row_sums = vec![0.0; rows];
        let mut col_sums = vec![0.0; cols];
        for i in 0..rows {
            for (j, v) in r.row(i).iter().enumerate() {
                let sq = v * v;
                row_sums[i] += sq;
                col_sums[j] += sq;
            }
        }
        for (a, s) in self.row_acc.iter_mut().zip(row_sums) {
            *a = beta2 * *a + (1.0 - beta2) * s;
        }
        for (a, s) in self.col_acc.iter_mut().zip(col_sums) {
            *a = beta2 * *a + (1.0 - beta2) * s;
        }
        self.step_count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdafactorState {
    pub m: Matrix,
    pub second: FactoredSecondMoment,
}

impl AdafactorState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            second: FactoredSecondMoment::zeros(rows, cols),
        }
    }
}

/// GaLore with Adafactor's factored second moment.
pub fn galore_adafactor_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut AdafactorState,
    hp: &HyperParams,
) -> Result<Matrix> {
    check_inputs(x, g, Some(p))?;
    let expected = (p.rank(), g.cols());
    check_state("adafactor first moment", state.m.shape(), expected)?;
    check_state(
        "adafactor accumulators",
        (state.second.row_acc.len(), state.second.col_acc.len()),
        expected,
    )?;
    let r = p.project(g)?;
    update_first_moment(&mut state.m, &r, hp.beta1);
    state.second.update(&r, hp.beta2);
    let v_hat = state.second.reconstruct();
    let rhat = state.m.zip_map(&v_hat, |m, v| m / (v.sqrt() + hp.xi));
    x.add_scaled(&p.expand(&rhat)?, -hp.eta * hp.alpha)
}

/// One second-moment scalar per row of the projected gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSecondMoment {
    pub v: Vec<f64>,
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamMiniState {
    pub m: Matrix,
    pub second: BlockSecondMoment,
}

impl AdamMiniState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            second: BlockSecondMoment {
                v: vec![0.0; rows],
                step_count: 0,
            },
        }
    }
}

/// GaLore with Adam-mini's per-block (per-row) second moment.
pub fn galore_adam_mini_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut AdamMiniState,
    hp: &HyperParams,
) -> Result<Matrix> {
    check_inputs(x, g, Some(p))?;
    let expected = (p.rank(), g.cols());
    check_state("adam-mini first moment", state.m.shape(), expected)?;
    check_state("adam-mini blocks", (state.second.v.len(), g.cols()), expected)?;
    let r = p.project(g)?;
    update_first_moment(&mut state.m, &r, hp.beta1);
    let n = r.cols() as f64;
    for (i, v) in state.second.v.iter_mut().enumerate() {
        let mean_sq = r.row(i).iter().map(|x| x * x).sum::<f64>() / n;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * mean_sq;
    }
    state.second.step_count += 1;
    let mut rhat = state.m.clone();
    for (i, v) in state.second.v.iter().enumerate() {
        let denom = v.sqrt() + hp.xi;
        for e in rhat.row_mut(i) {
            *e /= denom;
        }
    }
    x.add_scaled(&p.expand(&rhat)?, -hp.eta * hp.alpha)
}
