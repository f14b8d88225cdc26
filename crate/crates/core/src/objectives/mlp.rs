use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{check_params, GradientSample, Objective};
use crate::error::{Error, Result};
use crate::matcore::{gaussian_matrix, Matrix, RngStream};

const DATA_TAG: u64 = 0xDA7A;
const BATCH_TAG: u64 = 0xBA7C;
const INIT_TAG: u64 = 0x1417;

/// Labelled points drawn around per-class Gaussian centres.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl BlobDataset {
    /// `per_class` points per class, `x = c_k + ε`, `c_k ~ N(0, spread² I)`,
    /// `ε ~ N(0, I)`. Points are interleaved by class.
    pub fn generate(dim: usize, classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Self> {
        if dim == 0 || per_class == 0 {
            return Err(Error::Dataset(format!(
                "empty dataset: dim {dim}, {per_class} points per class"
            )));
        }
        let mut rng = RngStream::derive(seed, &[DATA_TAG]);
        let centres = gaussian_matrix(&mut rng, classes, dim).scale(spread);
        let n = classes * per_class;
        let mut features = Matrix::zeros(n, dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % classes.max(1);
            for (j, v) in features.row_mut(i).iter_mut().enumerate() {
                *v = centres.get(k, j) + rng.normal();
            }
            labels.push(k);
        }
        Self::from_parts(features, labels, classes)
    }

    pub fn from_parts(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&k| k >= classes) {
            return Err(Error::Dataset(format!("label {bad} out of range for {classes} classes")));
        }
        let distinct: BTreeSet<usize> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(Error::Dataset(format!(
                "dataset has {} distinct class(es); at least 2 are required",
                distinct.len()
            )));
        }
        features.check_finite()?;
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Every point repeated `times` times in sequence.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        let n = self.len();
        let features = Matrix::from_fn(n * times, self.dim(), |i, j| self.features.get(i % n, j));
        let labels = (0..n * times).map(|i| self.labels[i % n]).collect();
        Self::from_parts(features, labels, self.classes)
    }

    /// One row per point: features, then the integer label. The header names
    /// the columns `x0..x{d-1},label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim() {
            let _ = write!(out, "x{j},");
        }
        out.push_str("label\n");
        for (i, label) in self.labels.iter().enumerate() {
            for v in self.features.row(i) {
                let _ = write!(out, "{v:?},");
            }
            let _ = writeln!(out, "{label}");
        }
        out
    }

    pub fn from_csv(text: &str, classes: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Dataset("empty CSV".into()))?;
        let dim = header.split(',').count().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| {
            Error::Dataset(format!("header {header:?} has no feature columns"))
        })?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Dataset(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    dim + 1
                )));
            }
            for f in &fields[..dim] {
                data.push(f.parse::<f64>().map_err(|e| Error::Dataset(format!("row {}: {e}", lineno + 1)))?);
            }
            labels.push(
                fields[dim]
                    .parse::<usize>()
                    .map_err(|e| Error::Dataset(format!("row {} label: {e}", lineno + 1)))?,
            );
        }
        let features = Matrix::from_vec(labels.len(), dim, data)?;
        Self::from_parts(features, labels, classes)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path, classes: usize) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?, classes)
    }
}

/// Two-layer perceptron `softmax(relu(X W₁) W₂)` with cross-entropy loss and
/// no biases.
///
/// Each weight is stored with `rows ≤ cols`: `W₁` (input × hidden) and `W₂`
/// (hidden × classes) are kept transposed when they are taller than wide.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    input: usize,
    hidden: usize,
    classes: usize,
    data: BlobDataset,
    batch_size: usize,
    dataset_seed: u64,
}

impl MlpObjective {
    /// Blob dataset with `per_class` points per class and centre spread 2.
    pub fn new(
        input: usize,
        hidden: usize,
        classes: usize,
        per_class: usize,
        batch_size: usize,
        dataset_seed: u64,
    ) -> Result<Self> {
        let data = BlobDataset::generate(input, classes, per_class, 2.0, dataset_seed)?;
        Self::with_dataset(hidden, data, batch_size, dataset_seed)
    }

    pub fn with_dataset(hidden: usize, data: BlobDataset, batch_size: usize, dataset_seed: u64) -> Result<Self> {
        if hidden == 0 || batch_size == 0 {
            return Err(Error::InvalidParameter(format!(
                "hidden width {hidden} and batch size {batch_size} must be positive"
            )));
        }
        Ok(Self {
            input: data.dim(),
            hidden,
            classes: data.classes(),
            data,
            batch_size,
            dataset_seed,
        })
    }

    pub fn dataset(&self) -> &BlobDataset {
        &self.data
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn transposed(&self, layer: usize) -> bool {
        match layer {
            0 => self.input > self.hidden,
            _ => self.hidden > self.classes,
        }
    }

    fn logical<'a>(&self, x: &'a [Matrix], layer: usize) -> Cow<'a, Matrix> {
        if self.transposed(layer) {
            Cow::Owned(x[layer].transpose())
        } else {
            Cow::Borrowed(&x[layer])
        }
    }

    fn stored(&self, w: Matrix, layer: usize) -> Matrix {
        if self.transposed(layer) {
            w.transpose()
        } else {
            w
        }
    }

    /// Mini-batch indices for `step`, drawn with replacement from
    /// `(dataset_seed, step)` alone.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let mut rng = RngStream::derive(self.dataset_seed, &[BATCH_TAG, step]);
        (0..self.batch_size).map(|_| rng.below(self.data.len())).collect()
    }

    /// Mean cross-entropy and its gradient over the given points.
    pub fn loss_and_grad(&self, x: &[Matrix], indices: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        check_params(x, &self.layer_shapes())?;
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty mini-batch".into()));
        }
        let w1 = self.logical(x, 0);
        let w2 = self.logical(x, 1);
        let b = indices.len();
        let xb = Matrix::from_fn(b, self.input, |i, j| self.data.features.get(indices[i], j));
        let h = xb.matmul(&w1)?;
        let a = h.map(|v| v.max(0.0));
        let z = a.matmul(&w2)?;

        let mut loss = 0.0;
        let mut dz = Matrix::zeros(b, self.classes);
        for i in 0..b {
            let row = z.row(i);
            let zmax = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - zmax).exp()).sum();
            let log_denom = denom.ln() + zmax;
            let y = self.data.labels[indices[i]];
            loss += log_denom - row[y];
            for (k, d) in dz.row_mut(i).iter_mut().enumerate() {
                let p = (row[k] - log_denom).exp();
                *d = (p - if k == y { 1.0 } else { 0.0 }) / b as f64;
            }
        }
        loss /= b as f64;

        let dw2 = a.t_matmul(&dz)?;
        let da = dz.matmul(&w2.transpose())?;
        let dh = da.zip_map(&h, |d, hv| if hv > 0.0 { d } else { 0.0 });
        let dw1 = xb.t_matmul(&dh)?;
        Ok((loss, vec![self.stored(dw1, 0), self.stored(dw2, 1)]))
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }
}

impl Objective for MlpObjective {
    fn layer_names(&self) -> Vec<String> {
        vec!["w1".into(), "w2".into()]
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let orient = |a: usize, b: usize| (a.min(b), a.max(b));
        vec![orient(self.input, self.hidden), orient(self.hidden, self.classes)]
    }

    /// He initialization for `W₁`, `N(0, 1/hidden)` for `W₂`.
    fn initial_params(&self, seed: u64) -> Vec<Matrix> {
        let mut r1 = RngStream::derive(seed, &[INIT_TAG, 0]);
        let mut r2 = RngStream::derive(seed, &[INIT_TAG, 1]);
        let w1 = gaussian_matrix(&mut r1, self.input, self.hidden).scale((2.0 / self.input as f64).sqrt());
        let w2 = gaussian_matrix(&mut r2, self.hidden, self.classes).scale((1.0 / self.hidden as f64).sqrt());
        vec![self.stored(w1, 0), self.stored(w2, 1)]
    }

    fn loss(&self, x: &[Matrix]) -> Result<f64> {
        Ok(self.loss_and_grad(x, &self.all_indices())?.0)
    }

    fn gradient(&self, x: &[Matrix]) -> Result<Vec<Matrix>> {
        Ok(self.loss_and_grad(x, &self.all_indices())?.1)
    }

    /// Mini-batch gradient. Mini-batch noise is not tracked per draw, so
    /// `noise_norms` is empty.
    fn sample(&self, x: &[Matrix], step: u64, _rng: &mut RngStream) -> Result<GradientSample> {
        let (loss, grads) = self.loss_and_grad(x, &self.batch_indices(step))?;
        Ok(GradientSample {
            grads,
            loss,
            noise_norms: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{finite_difference_grad, max_relative_deviation};

    fn small(seed: u64) -> MlpObjective {
        MlpObjective::new(6, 8, 4, 10, 16, seed).unwrap()
    }

    #[test]
    fn orientation_keeps_rows_at_most_cols() {
        let m = MlpObjective::new(32, 64, 32, 4, 8, 0).unwrap();
        assert_eq!(m.layer_shapes(), vec![(32, 64), (32, 64)]);
        let x = m.initial_params(1);
        assert_eq!(x[1].shape(), (32, 64));
        let g = m.gradient(&x).unwrap();
        assert_eq!(g[0].shape(), (32, 64));
        assert_eq!(g[1].shape(), (32, 64));
        let s = small(0);
        assert_eq!(s.layer_shapes(), vec![(6, 8), (4, 8)]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..4 {
            let m = small(seed);
            let x = m.initial_params(seed + 100);
            let idx = m.batch_indices(3);
            let analytic = m.loss_and_grad(&x, &idx).unwrap().1;
            let fd = finite_difference_grad(|p| Ok(m.loss_and_grad(p, &idx)?.0), &x, 1e-5).unwrap();
            let dev = max_relative_deviation(&fd, &analytic);
            assert!(dev <= 1e-5, "seed {seed}: {dev}");
        }
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let m = small(1);
        let x: Vec<Matrix> = m.layer_shapes().iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        assert!((m.loss(&x).unwrap() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn duplicated_dataset_keeps_full_gradient() {
        let m = small(2);
        let twice = MlpObjective::with_dataset(8, m.dataset().repeated(2).unwrap(), 16, 2).unwrap();
        let x = m.initial_params(5);
        let a = m.gradient(&x).unwrap();
        let b = twice.gradient(&x).unwrap();
        assert!(max_relative_deviation(&a, &b) < 1e-12);
        assert!((m.loss(&x).unwrap() - twice.loss(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let f = Matrix::zeros(3, 2);
        assert!(matches!(
            BlobDataset::from_parts(f, vec![1, 1, 1], 3),
            Err(Error::Dataset(_))
        ));
        assert!(BlobDataset::generate(4, 1, 10, 1.0, 0).is_err());
    }

    #[test]
    fn batches_depend_only_on_seed_and_step() {
        let a = small(9);
        let b = small(9);
        assert_eq!(a.batch_indices(17), b.batch_indices(17));
        assert_ne!(a.batch_indices(17), a.batch_indices(18));
        let x = a.initial_params(0);
        let mut r1 = RngStream::new(1, 1);
        let mut r2 = RngStream::new(2, 2);
        let s1 = a.sample(&x, 4, &mut r1).unwrap();
        let s2 = b.sample(&x, 4, &mut r2).unwrap();
        assert_eq!(s1.loss.to_bits(), s2.loss.to_bits());
        assert_eq!(s1.grads, s2.grads);
    }

    #[test]
    fn csv_roundtrip() {
        let d = BlobDataset::generate(3, 3, 5, 1.5, 4).unwrap();
        let back = BlobDataset::from_csv(&d.to_csv(), 3).unwrap();
        assert_eq!(back, d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        d.write_csv(&path).unwrap();
        assert_eq!(BlobDataset::read_csv(&path, 3).unwrap(), d);
        assert!(BlobDataset::from_csv("x0,label\n1.0,0\n2.0,0\n", 2).is_err());
        assert!(BlobDataset::from_csv("x0,label\n1.0\n", 2).is_err());
    }

    #[test]
    fn training_signal_exists() {
        let m = small(3);
        let mut x = m.initial_params(3);
        let l0 = m.loss(&x).unwrap();
        for _ in 0..200 {
            let g = m.gradient(&x).unwrap();
            for (xl, gl) in x.iter_mut().zip(&g) {
                *xl = xl.add_scaled(gl, -0.1).unwrap();
            }
        }
        assert!(m.loss(&x).unwrap() < 0.7 * l0);
    }
}
