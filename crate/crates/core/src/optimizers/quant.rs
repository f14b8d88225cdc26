//! Blockwise absmax 8-bit storage for optimizer moments.

use serde::{Deserialize, Serialize};

use super::adam::{galore_adam_step, fira_adam_step, AdamState};
use super::HyperParams;
use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::subspace::Projector;

/// Consecutive elements (row-major) sharing one scale.
pub const BLOCK_SIZE: usize = 256;

/// Signed 8-bit codes with one absmax scale per block:
/// `value ≈ code / 127 · scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantized8State {
    pub codes: Vec<i8>,
    pub scales: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Quantized8State {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self {
            codes: vec![0; n],
            scales: vec![0.0; n.div_ceil(BLOCK_SIZE)],
            rows,
            cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Rebuilds from stored codes and scales, validating the layout.
    pub fn from_parts(rows: usize, cols: usize, codes: Vec<i8>, scales: Vec<f64>) -> Result<Self> {
        let n = rows * cols;
        if codes.len() != n || scales.len() != n.div_ceil(BLOCK_SIZE) {
            return Err(Error::InvalidMatrix(format!(
                "8-bit state {rows}x{cols} expects {n} codes and {} scales, got {} and {}",
                n.div_ceil(BLOCK_SIZE),
                codes.len(),
                scales.len()
            )));
        }
        if codes.contains(&i8::MIN) {
            return Err(Error::InvalidMatrix("code -128 is outside the symmetric range".into()));
        }
        Ok(Self { codes, scales, rows, cols })
    }
}

pub fn quantize_state(x: &Matrix) -> Quantized8State {
    let data = x.as_slice();
    let mut codes = Vec::with_capacity(data.len());
    let mut scales = Vec::with_capacity(data.len().div_ceil(BLOCK_SIZE));
    for block in data.chunks(BLOCK_SIZE) {
        let scale = block.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        scales.push(scale);
        for v in block {
            let code = if scale > 0.0 {
                // f64::round is half-away-from-zero
                (v / scale * 127.0).round().clamp(-127.0, 127.0) as i8
            } else {
                0
            };
            codes.push(code);
        }
    }
    Quantized8State {
        codes,
        scales,
        rows: x.rows(),
        cols: x.cols(),
    }
}

pub fn dequantize_state(q: &Quantized8State) -> Matrix {
    let data = q
        .codes
        .chunks(BLOCK_SIZE)
        .zip(&q.scales)
        .flat_map(|(block, &scale)| block.iter().map(move |&c| c as f64 / 127.0 * scale))
        .collect();
    Matrix::from_vec(q.rows, q.cols, data).expect("layout validated at construction")
}

/// Adam moments held in 8-bit form between steps. The second moment is
/// stored as `√V` so its codes cover the same linear range as `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam8bitState {
    pub m: Quantized8State,
    pub v_sqrt: Quantized8State,
    pub step_count: u64,
}

impl Adam8bitState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Quantized8State::zeros(rows, cols),
            v_sqrt: Quantized8State::zeros(rows, cols),
            step_count: 0,
        }
    }

    pub fn dequantize(&self) -> AdamState {
        AdamState {
            m: dequantize_state(&self.m),
            v: dequantize_state(&self.v_sqrt).map(|r| r * r),
            step_count: self.step_count,
        }
    }

    pub fn store(&mut self, s: &AdamState) {
        self.m = quantize_state(&s.m);
        self.v_sqrt = quantize_state(&s.v.map(f64::sqrt));
        self.step_count = s.step_count;
    }
}

/// Dequantize → exact GaLore-Adam step → requantize.
pub fn galore_adam8bit_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut Adam8bitState,
    hp: &HyperParams,
) -> Result<Matrix> {
    let mut exact = state.dequantize();
    let out = galore_adam_step(x, g, p, &mut exact, hp)?;
    state.store(&exact);
    Ok(out)
}

/// Dequantize → exact Fira-Adam step → requantize.
pub fn fira_adam8bit_step(
    x: &Matrix,
    g: &Matrix,
    p: &Projector,
    state: &mut Adam8bitState,
    hp: &HyperParams,
) -> Result<Matrix> {
    let mut exact = state.dequantize();
    let out = fira_adam_step(x, g, p, &mut exact, hp)?;
    state.store(&exact);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{gaussian_matrix, RngStream};

    #[test]
    fn zeros_roundtrip_exactly() {
        let z = Matrix::zeros(3, 100);
        let q = quantize_state(&z);
        assert!(q.scales.iter().all(|s| *s == 0.0));
        assert!(q.codes.iter().all(|c| *c == 0));
        assert_eq!(dequantize_state(&q), z);
    }

    #[test]
    fn single_block_codes() {
        let x = Matrix::from_rows(&[vec![-1.0, 1.0, 0.5]]).unwrap();
        let q = quantize_state(&x);
        assert_eq!(q.scales, vec![1.0]);
        // 63.5 rounds away from zero
        assert_eq!(q.codes, vec![-127, 127, 64]);
        let back = dequantize_state(&q);
        assert!(back.sub(&x).unwrap().max_abs() <= 1.0 / 127.0);
    }

    #[test]
    fn blocks_span_rows() {
        let x = Matrix::from_fn(3, 200, |i, j| if i == 2 && j == 199 { 50.0 } else { 0.01 * j as f64 });
        let q = quantize_state(&x);
        assert_eq!(q.scales.len(), 3);
        assert_eq!(q.scales[2], 50.0);
    }

    #[test]
    fn random_roundtrip_within_block_bound() {
        let mut rng = RngStream::new(77, 0);
        for _ in 0..20 {
            let x = gaussian_matrix(&mut rng, 7, 90).scale(3.0);
            let q = quantize_state(&x);
            let back = dequantize_state(&q);
            for (k, (a, b)) in x.as_slice().iter().zip(back.as_slice()).enumerate() {
                let bound = q.scales[k / BLOCK_SIZE] / 127.0;
                assert!((a - b).abs() <= bound);
            }
        }
    }

    #[test]
    fn from_parts_validates() {
        assert!(Quantized8State::from_parts(2, 2, vec![0; 4], vec![1.0]).is_ok());
        assert!(Quantized8State::from_parts(2, 2, vec![0; 3], vec![1.0]).is_err());
        assert!(Quantized8State::from_parts(1, 1, vec![i8::MIN], vec![1.0]).is_err());
    }
}
