//! The low-rank optimizer family and a single dispatch entry point.

mod adam;
mod msgd;
mod quant;
mod schedule;
mod variants;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{fira_adam_step, fira_residual_scale, full_adam_step, galore_adam_step, AdamState};
pub use msgd::{msgd_sara_step, MomentumState};
pub use quant::{
    dequantize_state, fira_adam8bit_step, galore_adam8bit_step, quantize_state, Adam8bitState,
    Quantized8State, BLOCK_SIZE,
};
pub use schedule::LrSchedule;
pub use variants::{
    galore_adafactor_step, galore_adam_mini_step, AdafactorState, AdamMiniState,
    BlockSecondMoment, FactoredSecondMoment,
};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::subspace::Projector;

/// Step size `η`, scale `α`, decays `β₁, β₂`, stabilizer `ξ`, rank `r` and
/// refresh period `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub eta: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub xi: f64,
    pub rank: usize,
    pub refresh_period: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            alpha: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            xi: 1e-8,
            rank: 1,
            refresh_period: 200,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return bad("xi must be > 0");
        }
        if self.rank == 0 {
            return bad("rank must be >= 1");
        }
        if self.refresh_period == 0 {
            return bad("refresh period must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    FullAdam,
    GaloreAdam,
    FiraAdam,
    GaloreAdafactor,
    GaloreAdamMini,
    #[serde(rename = "galore_adam_8bit")]
    GaloreAdam8bit,
    #[serde(rename = "fira_adam_8bit")]
    FiraAdam8bit,
    Msgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 8] = [
        OptimizerKind::FullAdam,
        OptimizerKind::GaloreAdam,
        OptimizerKind::FiraAdam,
        OptimizerKind::GaloreAdafactor,
        OptimizerKind::GaloreAdamMini,
        OptimizerKind::GaloreAdam8bit,
        OptimizerKind::FiraAdam8bit,
        OptimizerKind::Msgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::FullAdam => "full_adam",
            OptimizerKind::GaloreAdam => "galore_adam",
            OptimizerKind::FiraAdam => "fira_adam",
            OptimizerKind::GaloreAdafactor => "galore_adafactor",
            OptimizerKind::GaloreAdamMini => "galore_adam_mini",
            OptimizerKind::GaloreAdam8bit => "galore_adam_8bit",
            OptimizerKind::FiraAdam8bit => "fira_adam_8bit",
            OptimizerKind::Msgd => "msgd",
        }
    }

    /// Whether the optimizer works in projected coordinates.
    pub fn is_low_rank(self) -> bool {
        !matches!(self, OptimizerKind::FullAdam)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown optimizer kind '{s}'")))
    }
}

/// Per-layer optimizer state for any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerState {
    Adam(AdamState),
    Adafactor(AdafactorState),
    AdamMini(AdamMiniState),
    Adam8bit(Adam8bitState),
    Momentum(MomentumState),
}

impl OptimizerState {
    /// Zero state for a layer of width `cols`; `rank` is the projector rank
    /// (ignored by full Adam, which uses `rows`).
    pub fn init(kind: OptimizerKind, rows: usize, cols: usize, rank: usize) -> Self {
        use OptimizerKind::*;
        match kind {
            FullAdam => OptimizerState::Adam(AdamState::zeros(rows, cols)),
            GaloreAdam | FiraAdam => OptimizerState::Adam(AdamState::zeros(rank, cols)),
            GaloreAdafactor => OptimizerState::Adafactor(AdafactorState::zeros(rank, cols)),
            GaloreAdamMini => OptimizerState::AdamMini(AdamMiniState::zeros(rank, cols)),
            GaloreAdam8bit | FiraAdam8bit => OptimizerState::Adam8bit(Adam8bitState::zeros(rank, cols)),
            Msgd => OptimizerState::Momentum(MomentumState::zeros(rank, cols)),
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::Adam(s) => s.step_count,
            OptimizerState::Adafactor(s) => s.second.step_count,
            OptimizerState::AdamMini(s) => s.second.step_count,
            OptimizerState::Adam8bit(s) => s.step_count,
            OptimizerState::Momentum(s) => s.step_count,
        }
    }

    /// Named matrices for checkpointing; vectors become `1 × len` rows and
    /// 8-bit codes are stored as exact `f64` values.
    pub fn to_matrices(&self) -> Vec<(&'static str, Matrix)> {
        let row = |v: &[f64]| Matrix::from_fn(1, v.len(), |_, j| v[j]);
        let codes = |q: &Quantized8State| {
            Matrix::from_fn(q.rows, q.cols, |i, j| q.codes[i * q.cols + j] as f64)
        };
        match self {
            OptimizerState::Adam(s) => vec![("m", s.m.clone()), ("v", s.v.clone())],
            OptimizerState::Adafactor(s) => vec![
                ("m", s.m.clone()),
                ("row_acc", row(&s.second.row_acc)),
                ("col_acc", row(&s.second.col_acc)),
            ],
            OptimizerState::AdamMini(s) => vec![("m", s.m.clone()), ("block_v", row(&s.second.v))],
            OptimizerState::Adam8bit(s) => vec![
                ("m_codes", codes(&s.m)),
                ("m_scales", row(&s.m.scales)),
                ("v_sqrt_codes", codes(&s.v_sqrt)),
                ("v_sqrt_scales", row(&s.v_sqrt.scales)),
            ],
            OptimizerState::Momentum(s) => vec![("m_lr", s.m_lr.clone())],
        }
    }

    /// Inverse of [`OptimizerState::to_matrices`].
    pub fn from_matrices(
        kind: OptimizerKind,
        step_count: u64,
        mut get: impl FnMut(&str) -> Result<Matrix>,
    ) -> Result<Self> {
        use OptimizerKind::*;
        let vec_of = |m: Matrix| m.into_vec();
        let quant = |codes: Matrix, scales: Matrix| -> Result<Quantized8State> {
            let (r, c) = codes.shape();
            let codes = codes.as_slice().iter().map(|&v| v as i8).collect();
            Quantized8State::from_parts(r, c, codes, scales.into_vec())
        };
        Ok(match kind {
            FullAdam | GaloreAdam | FiraAdam => OptimizerState::Adam(AdamState {
                m: get("m")?,
                v: get("v")?,
                step_count,
            }),
            GaloreAdafactor => OptimizerState::Adafactor(AdafactorState {
                m: get("m")?,
                second: FactoredSecondMoment {
                    row_acc: vec_of(get("row_acc")?),
                    col_acc: vec_of(get("col_acc")?),
                    step_count,
                },
            }),
            GaloreAdamMini => OptimizerState::AdamMini(AdamMiniState {
                m: get("m")?,
                second: BlockSecondMoment {
                    v: vec_of(get("block_v")?),
                    step_count,
                },
            }),
            GaloreAdam8bit | FiraAdam8bit => OptimizerState::Adam8bit(Adam8bitState {
                m: quant(get("m_codes")?, get("m_scales")?)?,
                v_sqrt: quant(get("v_sqrt_codes")?, get("v_sqrt_scales")?)?,
                step_count,
            }),
            Msgd => OptimizerState::Momentum(MomentumState {
                m_lr: get("m_lr")?,
                step_count,
            }),
        })
    }
}

/// Everything one layer's step needs besides its state.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub x: &'a Matrix,
    pub g: &'a Matrix,
    pub projector: &'a Projector,
    /// Projector active before this step (MSGD re-projection source).
    pub prev_projector: Option<&'a Projector>,
    /// Whether the projector was re-selected at this step.
    pub refreshed: bool,
}

/// Routes one layer's update to the matching optimizer.
pub fn step_dispatch(
    kind: OptimizerKind,
    input: StepInputs<'_>,
    state: &mut OptimizerState,
    hp: &HyperParams,
) -> Result<Matrix> {
    use OptimizerKind::*;
    let StepInputs {
        x,
        g,
        projector: p,
        ..
    } = input;
    match (kind, state) {
        (FullAdam, OptimizerState::Adam(s)) => full_adam_step(x, g, s, hp),
        (GaloreAdam, OptimizerState::Adam(s)) => galore_adam_step(x, g, p, s, hp),
        (FiraAdam, OptimizerState::Adam(s)) => fira_adam_step(x, g, p, s, hp),
        (GaloreAdafactor, OptimizerState::Adafactor(s)) => galore_adafactor_step(x, g, p, s, hp),
        (GaloreAdamMini, OptimizerState::AdamMini(s)) => galore_adam_mini_step(x, g, p, s, hp),
        (GaloreAdam8bit, OptimizerState::Adam8bit(s)) => galore_adam8bit_step(x, g, p, s, hp),
        (FiraAdam8bit, OptimizerState::Adam8bit(s)) => fira_adam8bit_step(x, g, p, s, hp),
        (Msgd, OptimizerState::Momentum(s)) => {
            msgd_sara_step(x, g, p, input.prev_projector, s, hp.eta, hp.beta1, input.refreshed)
        }
        (kind, _) => Err(Error::Unsupported(format!(
            "optimizer state does not belong to {kind}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{gaussian_matrix, RngStream};
    use crate::subspace::select_random;

    fn hp() -> HyperParams {
        HyperParams {
            eta: 0.01,
            alpha: 0.25,
            rank: 2,
            ..HyperParams::default()
        }
    }

    fn inputs<'a>(x: &'a Matrix, g: &'a Matrix, p: &'a Projector) -> StepInputs<'a> {
        StepInputs {
            x,
            g,
            projector: p,
            prev_projector: None,
            refreshed: false,
        }
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(matches!("adamw".parse::<OptimizerKind>(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let mut rng = RngStream::new(1, 0);
        let p = select_random(5, 2, &mut rng, 0).unwrap();
        let x = gaussian_matrix(&mut rng, 5, 4);
        let g = gaussian_matrix(&mut rng, 5, 4);
        let mut direct = AdamState::zeros(2, 4);
        let want = galore_adam_step(&x, &g, &p, &mut direct, &hp()).unwrap();
        let mut st = OptimizerState::init(OptimizerKind::GaloreAdam, 5, 4, 2);
        let got = step_dispatch(OptimizerKind::GaloreAdam, inputs(&x, &g, &p), &mut st, &hp()).unwrap();
        assert_eq!(got, want);
        assert_eq!(st, OptimizerState::Adam(direct));
    }

    #[test]
    fn eight_bit_matches_exact_on_representable_state() {
        // M and √V chosen as code/127 · scale so dequantization is exact.
        let mut rng = RngStream::new(2, 0);
        let p = select_random(4, 2, &mut rng, 0).unwrap();
        let x = gaussian_matrix(&mut rng, 4, 3);
        let g = gaussian_matrix(&mut rng, 4, 3);
        // each block holds a ±127 code so its absmax equals the scale
        let m_codes = [-2.0, -1.0, 0.0, 1.0, 2.0, 127.0];
        let v_codes: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 127.0];
        let m = Matrix::from_fn(2, 3, |i, j| m_codes[i * 3 + j] / 127.0 * 0.5);
        let v = Matrix::from_fn(2, 3, |i, j| (v_codes[i * 3 + j] / 127.0 * 0.25).powi(2));
        let exact = AdamState { m: m.clone(), v: v.clone(), step_count: 3 };
        let mut q = Adam8bitState::zeros(2, 3);
        q.store(&exact);
        assert_eq!(q.dequantize().m, m);
        assert_eq!(q.dequantize().v, v);

        let mut exact_state = OptimizerState::Adam(exact);
        let mut q_state = OptimizerState::Adam8bit(q);
        let a = step_dispatch(OptimizerKind::GaloreAdam, inputs(&x, &g, &p), &mut exact_state, &hp()).unwrap();
        let b = step_dispatch(OptimizerKind::GaloreAdam8bit, inputs(&x, &g, &p), &mut q_state, &hp()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fira_with_identity_projector_matches_galore() {
        let mut rng = RngStream::new(3, 0);
        let p = Projector::identity(3, 0);
        let x = gaussian_matrix(&mut rng, 3, 3);
        let g = gaussian_matrix(&mut rng, 3, 3);
        let mut a = OptimizerState::init(OptimizerKind::GaloreAdam, 3, 3, 3);
        let mut b = OptimizerState::init(OptimizerKind::FiraAdam, 3, 3, 3);
        let xa = step_dispatch(OptimizerKind::GaloreAdam, inputs(&x, &g, &p), &mut a, &hp()).unwrap();
        let xb = step_dispatch(OptimizerKind::FiraAdam, inputs(&x, &g, &p), &mut b, &hp()).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn mismatched_state_rejected() {
        let p = Projector::identity(2, 0);
        let x = Matrix::zeros(2, 2);
        let mut st = OptimizerState::init(OptimizerKind::Msgd, 2, 2, 2);
        assert!(step_dispatch(OptimizerKind::GaloreAdam, inputs(&x, &x, &p), &mut st, &hp()).is_err());
    }

    #[test]
    fn state_matrices_roundtrip() {
        let mut rng = RngStream::new(4, 0);
        let p = select_random(4, 2, &mut rng, 0).unwrap();
        for kind in OptimizerKind::ALL {
            let mut st = OptimizerState::init(kind, 4, 3, 2);
            let mut x = gaussian_matrix(&mut rng, 4, 3);
            for _ in 0..3 {
                let g = gaussian_matrix(&mut rng, 4, 3);
                x = step_dispatch(kind, inputs(&x, &g, &p), &mut st, &hp()).unwrap();
            }
            let mats = st.to_matrices();
            let back = OptimizerState::from_matrices(kind, st.step_count(), |name| {
                Ok(mats.iter().find(|(n, _)| *n == name).unwrap().1.clone())
            })
            .unwrap();
            assert_eq!(back, st, "{kind}");
        }
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::default().validate().is_ok());
        assert!(HyperParams { eta: 0.0, ..HyperParams::default() }.validate().is_err());
        assert!(HyperParams { beta2: 1.0, ..HyperParams::default() }.validate().is_err());
        assert!(HyperParams { xi: -1.0, ..HyperParams::default() }.validate().is_err());
        assert!(HyperParams { refresh_period: 0, ..HyperParams::default() }.validate().is_err());
    }
}
