use super::{check_params, noisy_grad, GradientSample, NoiseSpec, Objective};
use crate::error::{Error, Result};
use crate::matcore::{gaussian_matrix, qr_orthonormal, spectral_norm, svd, Matrix, RngStream};

/// `f(x) = ½ Σ_l ‖A_l x_l − B_l‖_F²` with bounded additive gradient noise.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    noise: NoiseSpec,
    smoothness: f64,
    names: Vec<String>,
}

impl QuadraticObjective {
    pub fn new(a: Vec<Matrix>, b: Vec<Matrix>, noise: NoiseSpec) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "need matching non-empty A and B lists, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if noise.sigmas.len() != a.len() {
            return Err(Error::InvalidParameter(format!(
                "noise spec has {} radii for {} layers",
                noise.sigmas.len(),
                a.len()
            )));
        }
        let mut smoothness: f64 = 0.0;
        for (al, bl) in a.iter().zip(&b) {
            if al.rows() != bl.rows() {
                return Err(Error::ShapeMismatch {
                    op: "quadratic A_l x_l - B_l",
                    lhs: al.shape(),
                    rhs: bl.shape(),
                });
            }
            if al.cols() > bl.cols() {
                return Err(Error::InvalidParameter(format!(
                    "layer would be {}x{}; layers must satisfy rows <= cols",
                    al.cols(),
                    bl.cols()
                )));
            }
            al.check_finite()?;
            bl.check_finite()?;
            smoothness = smoothness.max(spectral_norm(&al.t_matmul(al)?)?);
        }
        let names = (0..a.len()).map(|l| format!("layer{l}")).collect();
        Ok(Self {
            a,
            b,
            noise,
            smoothness,
            names,
        })
    }

    /// Square `A_l = U diag(s) Vᵀ` with singular values evenly spaced in
    /// `[s_min, s_max]` and Gaussian `B_l`, for layers of the given shapes.
    pub fn seeded(
        shapes: &[(usize, usize)],
        s_min: f64,
        s_max: f64,
        noise: NoiseSpec,
        seed: u64,
    ) -> Result<Self> {
        if !(s_min > 0.0 && s_max >= s_min && s_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "singular value range [{s_min}, {s_max}] must be positive and ordered"
            )));
        }
        let mut a = Vec::with_capacity(shapes.len());
        let mut b = Vec::with_capacity(shapes.len());
        for (l, &(m, n)) in shapes.iter().enumerate() {
            let mut rng = RngStream::derive(seed, &[0x9A, l as u64]);
            let u = qr_orthonormal(&gaussian_matrix(&mut rng, m, m))?;
            let v = qr_orthonormal(&gaussian_matrix(&mut rng, m, m))?;
            let s: Vec<f64> = (0..m)
                .map(|i| {
                    if m == 1 {
                        s_max
                    } else {
                        s_max - (s_max - s_min) * i as f64 / (m - 1) as f64
                    }
                })
                .collect();
            a.push(u.matmul(&Matrix::diag(&s))?.matmul(&v.transpose())?);
            b.push(gaussian_matrix(&mut rng, m, n));
        }
        Self::new(a, b, noise)
    }

    /// `L = max_l σ_max(A_lᵀ A_l)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn a(&self) -> &[Matrix] {
        &self.a
    }

    pub fn b(&self) -> &[Matrix] {
        &self.b
    }

    pub fn eval(&self, x: &[Matrix]) -> Result<f64> {
        check_params(x, &self.layer_shapes())?;
        let mut total = 0.0;
        for ((al, bl), xl) in self.a.iter().zip(&self.b).zip(x) {
            total += 0.5 * al.matmul(xl)?.sub(bl)?.sum_sq();
        }
        Ok(total)
    }

    pub fn true_grad(&self, x: &[Matrix]) -> Result<Vec<Matrix>> {
        check_params(x, &self.layer_shapes())?;
        self.a
            .iter()
            .zip(&self.b)
            .zip(x)
            .map(|((al, bl), xl)| al.t_matmul(&al.matmul(xl)?.sub(bl)?))
            .collect()
    }

    /// `inf f = ½ Σ_l ‖(I − Π_l) B_l‖_F²` with `Π_l` the projector onto range(A_l).
    pub fn infimum(&self) -> Result<f64> {
        let mut total = 0.0;
        for (al, bl) in self.a.iter().zip(&self.b) {
            let f = svd(al)?;
            let s_max = f.s.first().copied().unwrap_or(0.0);
            let tol = s_max * (al.rows().max(al.cols()) as f64) * f64::EPSILON;
            let keep: Vec<usize> = (0..f.s.len()).filter(|&i| f.s[i] > tol).collect();
            let u = f.u.select_columns(&keep);
            let proj = u.matmul(&u.t_matmul(bl)?)?;
            total += 0.5 * bl.sub(&proj)?.sum_sq();
        }
        Ok(total)
    }

    /// `Δ = f(x) − inf f`.
    pub fn initial_gap(&self, x: &[Matrix]) -> Result<f64> {
        Ok(self.eval(x)? - self.infimum()?)
    }
}

impl Objective for QuadraticObjective {
    fn layer_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(al, bl)| (al.cols(), bl.cols()))
            .collect()
    }

    fn initial_params(&self, _seed: u64) -> Vec<Matrix> {
        self.layer_shapes()
            .into_iter()
            .map(|(m, n)| Matrix::zeros(m, n))
            .collect()
    }

    fn loss(&self, x: &[Matrix]) -> Result<f64> {
        self.eval(x)
    }

    fn gradient(&self, x: &[Matrix]) -> Result<Vec<Matrix>> {
        self.true_grad(x)
    }

    fn sample(&self, x: &[Matrix], _step: u64, rng: &mut RngStream) -> Result<GradientSample> {
        noisy_grad(self, x, &self.noise, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{finite_difference_grad, max_relative_deviation};
    use proptest::prelude::*;

    fn quiet(layers: usize) -> NoiseSpec {
        NoiseSpec::uniform(layers, 0.0).unwrap()
    }

    #[test]
    fn identity_objective() {
        let q = QuadraticObjective::new(vec![Matrix::identity(2)], vec![Matrix::zeros(2, 3)], quiet(1)).unwrap();
        let x = vec![Matrix::from_fn(2, 3, |i, j| (i as f64) - (j as f64) * 0.5)];
        assert_eq!(q.true_grad(&x).unwrap()[0], x[0]);
        assert!((q.smoothness() - 1.0).abs() < 1e-12);
        assert_eq!(q.eval(&q.initial_params(0)).unwrap(), 0.0);
        assert_eq!(q.infimum().unwrap(), 0.0);
    }

    #[test]
    fn scalar_example() {
        let q = QuadraticObjective::new(vec![Matrix::diag(&[2.0])], vec![Matrix::zeros(1, 1)], quiet(1)).unwrap();
        let x = vec![Matrix::diag(&[3.0])];
        assert_eq!(q.eval(&x).unwrap(), 18.0);
        assert_eq!(q.true_grad(&x).unwrap()[0].get(0, 0), 12.0);
        assert!((q.smoothness() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(QuadraticObjective::new(vec![Matrix::identity(2)], vec![Matrix::zeros(3, 3)], quiet(1)).is_err());
        assert!(QuadraticObjective::new(vec![Matrix::identity(2)], vec![Matrix::zeros(2, 3)], quiet(2)).is_err());
        let q = QuadraticObjective::new(vec![Matrix::identity(2)], vec![Matrix::zeros(2, 3)], quiet(1)).unwrap();
        assert!(q.eval(&[Matrix::zeros(3, 2)]).is_err());
    }

    #[test]
    fn finite_differences_on_random_instances() {
        for seed in 0..5 {
            let q = QuadraticObjective::seeded(&[(4, 6), (3, 5)], 0.3, 2.0, quiet(2), seed).unwrap();
            let mut rng = RngStream::new(seed, 77);
            let x: Vec<Matrix> = q
                .layer_shapes()
                .into_iter()
                .map(|(m, n)| gaussian_matrix(&mut rng, m, n))
                .collect();
            let fd = finite_difference_grad(|p| q.eval(p), &x, 1e-5).unwrap();
            let dev = max_relative_deviation(&fd, &q.true_grad(&x).unwrap());
            assert!(dev <= 1e-6, "seed {seed}: {dev}");
        }
    }

    #[test]
    fn finite_differences_identity_is_tight() {
        let q = QuadraticObjective::new(vec![Matrix::identity(3)], vec![Matrix::zeros(3, 3)], quiet(1)).unwrap();
        let x = vec![Matrix::from_fn(3, 3, |i, j| 0.1 * (i * 3 + j) as f64 - 0.4)];
        let fd = finite_difference_grad(|p| q.eval(p), &x, 1e-3).unwrap();
        assert!(max_relative_deviation(&fd, &x) < 1e-10);
    }

    #[test]
    fn seeded_spectrum_and_infimum() {
        let q = QuadraticObjective::seeded(&[(5, 7)], 0.5, 2.0, quiet(1), 3).unwrap();
        assert!((q.smoothness() - 4.0).abs() < 1e-10);
        let s = svd(&q.a()[0]).unwrap().s;
        assert!((s[4] - 0.5).abs() < 1e-10);
        assert!(q.infimum().unwrap().abs() < 1e-20);
        let x0 = q.initial_params(0);
        let gap = q.initial_gap(&x0).unwrap();
        assert!((gap - 0.5 * q.b()[0].sum_sq()).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_infimum() {
        // A = diag(1, 0): the second row of B is unreachable.
        let a = Matrix::diag(&[1.0, 0.0]);
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let q = QuadraticObjective::new(vec![a], vec![b], quiet(1)).unwrap();
        assert!((q.infimum().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_holds_on_random_pairs() {
        let q = QuadraticObjective::seeded(&[(4, 6), (4, 9)], 0.2, 3.0, quiet(2), 11).unwrap();
        let l = q.smoothness();
        let mut rng = RngStream::new(12, 0);
        for _ in 0..1000 {
            let x: Vec<Matrix> = q.layer_shapes().iter().map(|&(m, n)| gaussian_matrix(&mut rng, m, n)).collect();
            let y: Vec<Matrix> = q.layer_shapes().iter().map(|&(m, n)| gaussian_matrix(&mut rng, m, n)).collect();
            let gx = q.true_grad(&x).unwrap();
            let gy = q.true_grad(&y).unwrap();
            for k in 0..2 {
                let lhs = gx[k].sub(&gy[k]).unwrap().frobenius_norm();
                let rhs = l * x[k].sub(&y[k]).unwrap().frobenius_norm();
                assert!(lhs <= rhs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let q = QuadraticObjective::seeded(&[(3, 4)], 0.5, 1.0, quiet(1), 1).unwrap();
        let x = vec![Matrix::from_fn(3, 4, |i, j| (i + j) as f64)];
        let s = q.sample(&x, 0, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(s.grads, q.true_grad(&x).unwrap());
        assert_eq!(s.noise_norms, vec![0.0]);
    }

    #[test]
    fn noise_is_unbiased_and_bounded() {
        let sigma = 0.5;
        let q = QuadraticObjective::seeded(
            &[(2, 3), (2, 2)],
            0.5,
            1.5,
            NoiseSpec::uniform(2, sigma).unwrap(),
            4,
        )
        .unwrap();
        let x = vec![Matrix::from_fn(2, 3, |i, j| (i as f64) - (j as f64)), Matrix::identity(2)];
        let truth = q.true_grad(&x).unwrap();
        let mut rng = RngStream::new(5, 6);
        let trials = 100_000;
        let mut sums: Vec<Matrix> = truth.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
        let mut sq: Vec<Matrix> = sums.clone();
        for _ in 0..trials {
            let s = q.sample(&x, 0, &mut rng).unwrap();
            for (l, g) in s.grads.iter().enumerate() {
                assert!(s.noise_norms[l] <= sigma);
                let e = g.sub(&truth[l]).unwrap();
                assert!(e.frobenius_norm() <= sigma);
                assert_eq!(e.frobenius_norm(), s.noise_norms[l]);
                sums[l] = sums[l].add_scaled(&e, 1.0).unwrap();
                sq[l] = sq[l].add_scaled(&e.hadamard(&e).unwrap(), 1.0).unwrap();
            }
        }
        let n = trials as f64;
        for l in 0..2 {
            for k in 0..sums[l].as_slice().len() {
                let mean = sums[l].as_slice()[k] / n;
                let var = sq[l].as_slice()[k] / n - mean * mean;
                let se = (var / n).sqrt();
                assert!(mean.abs() <= 3.0 * se + 1e-15, "layer {l} entry {k}: {mean} vs {se}");
            }
        }
    }

    proptest! {
        #[test]
        fn eval_is_pure(seed in 0u64..1000) {
            let q = QuadraticObjective::seeded(&[(3, 5)], 0.1, 2.0, quiet(1), seed).unwrap();
            let mut rng = RngStream::new(seed, 1);
            let x = vec![gaussian_matrix(&mut rng, 3, 5)];
            prop_assert_eq!(q.eval(&x).unwrap().to_bits(), q.eval(&x).unwrap().to_bits());
        }

        #[test]
        fn noise_bound_never_exceeded(seed in 0u64..10_000, sigma in 1e-6f64..100.0) {
            let q = QuadraticObjective::seeded(&[(2, 4)], 0.5, 1.0, NoiseSpec::uniform(1, sigma).unwrap(), 0).unwrap();
            let mut rng = RngStream::new(seed, 0);
            let x = vec![gaussian_matrix(&mut rng, 2, 4).scale(1e3)];
            let truth = q.true_grad(&x).unwrap();
            for step in 0..20 {
                let s = q.sample(&x, step, &mut rng).unwrap();
                prop_assert!(s.noise_norms[0] <= sigma);
                prop_assert!(s.grads[0].sub(&truth[0]).unwrap().frobenius_norm() <= sigma);
            }
        }
    }
}
