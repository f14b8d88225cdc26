//! SVD, thin QR and the spectral norm.

use nalgebra::DMatrix;

use super::matrix::Matrix;
use crate::error::{Error, Result};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Thin SVD `A = U · diag(S) · Vt` with `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                let v = us.get(i, j) * s;
                us.set(i, j, v);
            }
        }
        us.matmul(&self.vt).expect("factor shapes agree")
    }
}

fn to_nalgebra(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn from_nalgebra(a: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Singular values sorted descending; each left singular vector is flipped so
/// its first nonzero entry is positive (the matching row of `Vt` flips too).
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    a.check_finite()?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidMatrix(format!("cannot factor a {m}x{n} matrix")));
    }
    let dec = nalgebra::SVD::try_new(to_nalgebra(a), true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or(Error::SvdNoConvergence { rows: m, cols: n })?;
    let mut u = from_nalgebra(dec.u.as_ref().expect("requested U"));
    let mut vt = from_nalgebra(dec.v_t.as_ref().expect("requested Vt"));
    let s: Vec<f64> = dec.singular_values.iter().map(|v| v.max(0.0)).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdNoConvergence { rows: m, cols: n });
    }

    for j in 0..s.len() {
        let first = (0..m).map(|i| u.get(i, j)).find(|v| *v != 0.0);
        if matches!(first, Some(v) if v < 0.0) {
            for i in 0..m {
                u.set(i, j, -u.get(i, j));
            }
            for v in vt.row_mut(j) {
                *v = -*v;
            }
        }
    }
    Ok(SvdFactors { u, s, vt })
}

/// Orthonormal basis for the column span of a full-column-rank `A` (m ≥ r),
/// by modified Gram–Schmidt with one re-orthogonalization pass.
///
/// Columns keep their orientation: `Qᵀ A` is upper triangular with a positive
/// diagonal.
pub fn qr_orthonormal(a: &Matrix) -> Result<Matrix> {
    a.check_finite()?;
    let (m, r) = a.shape();
    if r > m {
        return Err(Error::InvalidMatrix(format!(
            "qr_orthonormal needs rows >= cols, got {m}x{r}"
        )));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for j in 0..r {
        let mut v = a.col(j);
        let original = norm(&v);
        for _ in 0..2 {
            for q in &cols {
                let d = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv == 0.0 || nv <= 1e-10 * original {
            return Err(Error::RankDeficient { column: j });
        }
        v.iter_mut().for_each(|x| *x /= nv);
        cols.push(v);
    }
    Ok(Matrix::from_fn(m, r, |i, j| cols[j][i]))
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(svd(a)?.s.first().copied().unwrap_or(0.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::rng::{gaussian_matrix, RngStream};

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn diagonal_input_is_its_own_svd() {
        let f = svd(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(f.s, vec![3.0, 1.0]);
        assert!(f.u.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-15);
        assert!(f.vt.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let f = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(f.s, vec![0.0, 0.0]);
    }

    #[test]
    fn seeded_4x3_reconstructs() {
        let mut rng = RngStream::new(7, 0);
        let a = gaussian_matrix(&mut rng, 4, 3);
        let f = svd(&a).unwrap();
        assert!(rel_err(&f.reconstruct(), &a) <= 1e-10);
        assert!(f.u.orthonormality_deviation() <= 1e-10);
        assert!(f.vt.transpose().orthonormality_deviation() <= 1e-10);
        assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_and_tall_shapes() {
        let mut rng = RngStream::new(11, 3);
        for &(m, n) in &[(3, 7), (7, 3), (1, 5), (5, 1), (1, 1)] {
            let a = gaussian_matrix(&mut rng, m, n);
            let f = svd(&a).unwrap();
            let k = m.min(n);
            assert_eq!(f.u.shape(), (m, k));
            assert_eq!(f.vt.shape(), (k, n));
            assert!(rel_err(&f.reconstruct(), &a) <= 1e-10);
        }
    }

    #[test]
    fn left_vectors_are_sign_canonical() {
        let mut rng = RngStream::new(5, 5);
        let a = gaussian_matrix(&mut rng, 6, 4);
        let f = svd(&a).unwrap();
        for j in 0..4 {
            let first = f.u.col(j).into_iter().find(|v| *v != 0.0).unwrap();
            assert!(first > 0.0);
        }
        assert_eq!(svd(&a).unwrap(), f);
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut a = Matrix::zeros(2, 2);
        a.as_mut_slice()[3] = f64::INFINITY;
        assert!(matches!(svd(&a), Err(Error::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn qr_keeps_orthonormal_columns() {
        let a = Matrix::identity(3).select_columns(&[0, 1]);
        assert_eq!(qr_orthonormal(&a).unwrap(), a);
    }

    #[test]
    fn qr_removes_scaling() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let q = qr_orthonormal(&a).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(q.sub(&expected).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn qr_gaussian_is_orthonormal() {
        let mut rng = RngStream::new(99, 1);
        let a = gaussian_matrix(&mut rng, 8, 3);
        let q = qr_orthonormal(&a).unwrap();
        assert!(q.orthonormality_deviation() <= 1e-12);
        // span preserved: A = Q Qᵀ A
        let back = q.matmul(&q.t_matmul(&a).unwrap()).unwrap();
        assert!(rel_err(&back, &a) < 1e-12);
    }

    #[test]
    fn qr_reports_deficient_column() {
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0, 2.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 2.0],
        ])
        .unwrap();
        assert!(matches!(qr_orthonormal(&a), Err(Error::RankDeficient { column: 2 })));
        let z = Matrix::zeros(3, 1);
        assert!(matches!(qr_orthonormal(&z), Err(Error::RankDeficient { column: 0 })));
    }

    #[test]
    fn spectral_norm_of_diag() {
        assert_eq!(spectral_norm(&Matrix::diag(&[2.0, -5.0, 1.0])).unwrap(), 5.0);
    }
}
