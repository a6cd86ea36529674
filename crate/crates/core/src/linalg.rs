//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, sorted by descending eigenvalue.
///
/// Ties keep the backend's original order (stable sort). The input is
/// symmetrized first. Fails with [`Error::Numerical`] when the
/// decomposition does not reconstruct the input to `1e-8 · ‖A‖`.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> Result<SortedEigen> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a)?;
    let n = a.nrows();
    let sym = symmetrize(a);
    let eig = to_faer(&sym)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let raw_values = eig.S().column_vector();
    let raw_vectors = eig.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw_values[j].total_cmp(&raw_values[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| raw_values[i]));
    let vectors = DMatrix::from_fn(n, n, |i, j| raw_vectors[(i, order[j])]);
    let out = SortedEigen { values, vectors };

    let scale = sym.norm().max(f64::MIN_POSITIVE);
    let resid = (out.reconstruct() - &sym).norm();
    if resid > 1e-8 * scale && resid > 1e-300 {
        return Err(Error::Numerical(format!(
            "eigendecomposition residual {resid:e} exceeds 1e-8 * {scale:e}"
        )));
    }
    Ok(out)
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Thin SVD that fails with [`Error::Numerical`] unless the factors
/// reconstruct the input to `1e-10 · ‖A‖`.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    check_finite(a)?;
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let out = ThinSvd {
        u: from_faer(svd.U()),
        singular_values: DVector::from_fn(s.nrows(), |i, _| s[i]),
        v_t: from_faer(svd.V()).transpose(),
    };
    let resid = (&out.u * DMatrix::from_diagonal(&out.singular_values) * &out.v_t - a).norm();
    let scale = a.norm();
    if resid > 1e-10 * scale && resid > 1e-300 {
        return Err(Error::Numerical(format!(
            "SVD residual {resid:e} exceeds 1e-10 * {scale:e}"
        )));
    }
    Ok(out)
}

/// Singular values in descending order; all NaN when the input is not finite
/// or the solver fails.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let len = a.nrows().min(a.ncols());
    if check_finite(a).is_err() {
        return vec![f64::NAN; len];
    }
    let Ok(mut s) = to_faer(a).singular_values() else {
        return vec![f64::NAN; len];
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖A‖_op`, the largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// `‖AᵀA − BᵀB‖_F`.
pub fn gram_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a.tr_mul(a) - b.tr_mul(b)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thin_svd_reconstructs_hard_case() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                -2.1768780027503833, 6.4034910306011215, 0.06024408135702081,
                8.982532033507216, 1.0373506449476477, 0.9608690517376328,
                5.330460812114621, 0.8670138530237029, -1.594588783472367,
            ],
        );
        let svd = thin_svd(&a).unwrap();
        let recon = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * &svd.v_t;
        assert!((recon - &a).norm() < 1e-12 * a.norm());
        let s = svd.singular_values.as_slice();
        assert!((s[0] - 10.669512268202865).abs() < 1e-10);
        assert!((s[1] - 6.544654823663151).abs() < 1e-10);
        assert!((s[2] - 1.862689472859503).abs() < 1e-10);
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 6.0, 2.0]));
        let e = sym_eigen_desc(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[6.0, 3.0, 2.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.reconstruct() - a).norm() < 1e-12);
    }

    #[test]
    fn eigen_rejects_nonsquare_and_nan() {
        assert!(matches!(
            sym_eigen_desc(&DMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eigen_desc(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn singular_values_descending() {
        let a = DMatrix::from_row_slice(2, 3, &[0.0, 3.0, 0.0, 1.0, 0.0, 0.0]);
        let s = singular_values(&a);
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }
}
