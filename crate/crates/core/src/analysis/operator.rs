//! The differential `L_X(Ẋ) = XᵀẊ + ẊᵀX` of `X ↦ XᵀX` and its restriction
//! to the horizontal space `H_X = { Ẋ : ẊXᵀ = XẊᵀ }`.
//!
//! On `H_X` the singular values of `L_X` are `2σ_i` (`i ≤ d`),
//! `√(2(σ_i² + σ_j²))` (`i < j`) and `√2 σ_i` repeated `k − d` times; the
//! smallest is `√2 σ_d(X)`.

use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, thin_svd, ThinSvd};
use crate::model::RANK_TOLERANCE;

/// Analytic and numerically assembled singular values of `L_X` on `H_X`.
#[derive(Debug, Clone)]
pub struct OperatorSpectrum {
    /// Ascending, `dk − d(d−1)/2` entries.
    pub analytic: Vec<f64>,
    /// Ascending, same length.
    pub numeric: Vec<f64>,
    pub smallest: f64,
}

impl OperatorSpectrum {
    /// Largest entrywise relative gap between the two lists.
    pub fn max_relative_mismatch(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

pub fn lx_apply(x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xdot.shape() {
        return dim_err(format!(
            "tangent {:?} does not match cloud {:?}",
            xdot.shape(),
            x.shape()
        ));
    }
    let a = x.tr_mul(xdot);
    Ok(&a + a.transpose())
}

fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let s = linalg::singular_values(x);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 && lo > RANK_TOLERANCE * hi => Ok(()),
        _ => Err(Error::Degeneracy("cloud is rank deficient".into())),
    }
}

/// Orthogonal projection of `Ẋ` onto `H_X`.
///
/// Solves `ΩXXᵀ + XXᵀΩ = ẊXᵀ − XẊᵀ` for skew `Ω` in the eigenbasis of
/// `XXᵀ` and returns `Ẋ − ΩX`.
pub fn horizontal_project(x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xdot.shape() {
        return dim_err("tangent and cloud dimensions differ");
    }
    check_full_rank(x)?;
    let s = x * x.transpose();
    let eig = linalg::sym_eigen_desc(&s)?;
    let rhs = xdot * x.transpose() - x * xdot.transpose();
    let u = &eig.vectors;
    let mut omega = u.tr_mul(&rhs) * u;
    let d = x.nrows();
    for i in 0..d {
        for j in 0..d {
            omega[(i, j)] /= eig.values[i] + eig.values[j];
        }
    }
    let omega = u * omega * u.transpose();
    Ok(xdot - omega * x)
}

/// Singular values of `L_X` on `H_X` from the singular values of `X`, ascending.
pub fn lx_spectrum_analytic(sigma: &[f64], k: usize) -> Vec<f64> {
    let d = sigma.len();
    let mut out = Vec::with_capacity(d * k - d * (d.saturating_sub(1)) / 2);
    out.extend(sigma.iter().map(|s| 2.0 * s));
    for i in 0..d {
        for j in (i + 1)..d {
            out.push((2.0 * (sigma[i] * sigma[i] + sigma[j] * sigma[j])).sqrt());
        }
    }
    for s in sigma {
        out.extend(std::iter::repeat_n(2f64.sqrt() * s, k - d));
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Orthonormal basis of `H_X` built in the SVD frame `X = UΣVᵀ`,
/// `[V V_⊥]` orthogonal: `u_i v_iᵀ`; `U A Vᵀ` with
/// `A = (σ_i e_i e_jᵀ + σ_j e_j e_iᵀ)/√(σ_i² + σ_j²)`; and `u_i w_jᵀ` for the
/// columns `w_j` of `V_⊥`.
pub fn horizontal_basis(x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let (d, k) = x.shape();
    if d == 0 || k < d {
        return dim_err("horizontal basis needs k >= d >= 1");
    }
    check_full_rank(x)?;
    let ThinSvd { u, singular_values: sv, v_t } = thin_svd(x)?;
    let v = v_t.transpose(); // k × d

    // Complete V to an orthogonal k × k matrix using the Householder
    // reflectors of its QR factorization.
    let qr = v.clone().qr();
    let mut q_full = DMatrix::<f64>::identity(k, k);
    qr.q_tr_mul(&mut q_full);
    let q_full = q_full.transpose();
    let v_perp = q_full.columns(d, k - d).into_owned();

    let mut basis = Vec::with_capacity(d * k - d * (d - 1) / 2);
    for i in 0..d {
        basis.push(u.column(i) * v.column(i).transpose());
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let (si, sj) = (sv[i], sv[j]);
            let norm = (si * si + sj * sj).sqrt();
            let m = (u.column(i) * v.column(j).transpose() * si
                + u.column(j) * v.column(i).transpose() * sj)
                / norm;
            basis.push(m);
        }
    }
    for i in 0..d {
        for j in 0..(k - d) {
            basis.push(u.column(i) * v_perp.column(j).transpose());
        }
    }
    Ok(basis)
}

/// Half-vectorization with `√2` weights off the diagonal, an isometry from
/// symmetric matrices (Frobenius) to `R^{k(k+1)/2}`.
fn svec(s: &DMatrix<f64>, out: &mut [f64]) {
    let k = s.nrows();
    let mut idx = 0;
    for j in 0..k {
        out[idx] = s[(j, j)];
        idx += 1;
        for i in (j + 1)..k {
            out[idx] = std::f64::consts::SQRT_2 * 0.5 * (s[(i, j)] + s[(j, i)]);
            idx += 1;
        }
    }
}

/// Singular values of the matrix of `L_X` on a given orthonormal basis, ascending.
pub fn lx_singular_values_on_basis(
    x: &DMatrix<f64>,
    basis: &[DMatrix<f64>],
) -> Result<Vec<f64>> {
    let k = x.ncols();
    let rows = k * (k + 1) / 2;
    let mut op = DMatrix::<f64>::zeros(rows, basis.len());
    for (c, b) in basis.iter().enumerate() {
        let image = lx_apply(x, b)?;
        svec(&image, op.column_mut(c).as_mut_slice());
    }
    let normal = op.tr_mul(&op);
    let eig = linalg::sym_eigen_desc(&normal)?;
    let mut sv: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}

pub fn lx_spectrum(x: &DMatrix<f64>) -> Result<OperatorSpectrum> {
    let basis = horizontal_basis(x)?;
    let sigma = linalg::singular_values(x);
    let analytic = lx_spectrum_analytic(&sigma, x.ncols());
    let numeric = lx_singular_values_on_basis(x, &basis)?;
    let smallest = numeric.first().copied().unwrap_or(0.0);
    Ok(OperatorSpectrum {
        analytic,
        numeric,
        smallest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{haar_orthogonal, sample_cloud, SeedSpec};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_skew(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a - a.transpose()
    }

    #[test]
    fn lx_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let xdot = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(
            lx_apply(&x, &xdot).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        let c = sample_cloud(3, 5, SeedSpec::new(1, 0), false).unwrap();
        let twice = lx_apply(c.matrix(), c.matrix()).unwrap();
        assert!((twice - c.gram() * 2.0).norm() < 1e-12);
        assert!(lx_apply(c.matrix(), &DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn vertical_directions_are_in_the_kernel() {
        let mut rng = SeedSpec::new(2, 0).rng();
        for s in 0..50 {
            let x = sample_cloud(3, 6, SeedSpec::new(s, 1), false).unwrap();
            let omega = random_skew(3, &mut rng);
            let v = &omega * x.matrix();
            let img = lx_apply(x.matrix(), &v).unwrap();
            assert!(img.norm() <= 1e-10 * x.frobenius_norm().powi(2));
        }
    }

    #[test]
    fn projection_properties() {
        let mut rng = SeedSpec::new(3, 0).rng();
        let x = sample_cloud(3, 7, SeedSpec::new(3, 1), false).unwrap();
        let xm = x.matrix();
        let xdot = DMatrix::from_fn(3, 7, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = horizontal_project(xm, &xdot).unwrap();
        // Horizontal.
        let px = &p * xm.transpose();
        assert!((&px - px.transpose()).norm() < 1e-8);
        // Idempotent.
        assert!((horizontal_project(xm, &p).unwrap() - &p).norm() < 1e-8);
        // Orthogonal to every vertical direction.
        for _ in 0..20 {
            let v = random_skew(3, &mut rng) * xm;
            assert!(p.dot(&v).abs() < 1e-8);
        }
        // Removed part is vertical: Ẋ − P = ΩX with Ω = (Ẋ − P)X⁺ skew.
        let diff = &xdot - &p;
        let pinv = xm.transpose() * (xm * xm.transpose()).try_inverse().unwrap();
        let omega = &diff * pinv;
        assert!((&omega + omega.transpose()).norm() < 1e-8);
        assert!((&omega * xm - diff).norm() < 1e-8);
        // Pure vertical input projects to zero.
        let v = random_skew(3, &mut rng) * xm;
        assert!(horizontal_project(xm, &v).unwrap().norm() < 1e-10);
        // Rank deficiency.
        let bad = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            horizontal_project(&bad, &DMatrix::zeros(2, 3)),
            Err(Error::Degeneracy(_))
        ));
    }

    #[test]
    fn basis_is_orthonormal_and_horizontal() {
        let x = sample_cloud(3, 6, SeedSpec::new(4, 0), false).unwrap();
        let xm = x.matrix();
        let basis = horizontal_basis(xm).unwrap();
        assert_eq!(basis.len(), 3 * 6 - 3);
        for (a, ba) in basis.iter().enumerate() {
            let bx = ba * xm.transpose();
            assert!((&bx - bx.transpose()).norm() < 1e-10);
            for (b, bb) in basis.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ba.dot(bb) - expect).abs() < 1e-10);
            }
        }
    }

    /// Generic orthonormal basis of `H_X`: project every coordinate matrix and
    /// orthonormalize, independent of the SVD-frame construction.
    fn generic_basis(x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let (d, k) = x.shape();
        let mut basis: Vec<DMatrix<f64>> = Vec::new();
        for i in 0..d {
            for j in 0..k {
                let mut e = DMatrix::zeros(d, k);
                e[(i, j)] = 1.0;
                let mut p = horizontal_project(x, &e).unwrap();
                for _ in 0..2 {
                    for b in &basis {
                        let c = p.dot(b);
                        p -= b * c;
                    }
                }
                let n = p.norm();
                if n > 1e-6 {
                    basis.push(p / n);
                }
            }
        }
        basis
    }

    #[test]
    fn spectrum_basis_independent() {
        for (d, k, s) in [(2, 3, 0u64), (3, 5, 1), (2, 2, 2), (3, 3, 3)] {
            let x = sample_cloud(d, k, SeedSpec::new(s, 5), false).unwrap();
            let g = generic_basis(x.matrix());
            assert_eq!(g.len(), d * k - d * (d - 1) / 2);
            let numeric = lx_singular_values_on_basis(x.matrix(), &g).unwrap();
            let spec = lx_spectrum(x.matrix()).unwrap();
            for (a, b) in numeric.iter().zip(&spec.analytic) {
                assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spectrum_examples() {
        // Singular values (1, 1), k = 3.
        let mut rng = SeedSpec::new(6, 0).rng();
        let x = haar_orthogonal(2, &mut rng)
            * DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
            * haar_orthogonal(3, &mut rng);
        let spec = lx_spectrum(&x).unwrap();
        let r2 = 2f64.sqrt();
        let expect = [r2, r2, 2.0, 2.0, 2.0];
        assert_eq!(spec.numeric.len(), 5);
        for (a, b) in spec.numeric.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }

        // Singular values (2, 1), k = 2.
        let x = haar_orthogonal(2, &mut rng)
            * DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])
            * haar_orthogonal(2, &mut rng);
        let spec = lx_spectrum(&x).unwrap();
        let expect = [2.0, 10f64.sqrt(), 4.0];
        for (a, b) in spec.numeric.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{:?}", spec.numeric);
        }
        assert!(spec.max_relative_mismatch() < 1e-10);
    }

    #[test]
    fn smallest_singular_value() {
        for s in 0..50 {
            let x = sample_cloud(3, 7, SeedSpec::new(s, 9), false).unwrap();
            let spec = lx_spectrum(x.matrix()).unwrap();
            let target = 2f64.sqrt() * x.sigma_min();
            assert!((spec.smallest - target).abs() <= 1e-8 * target);
        }
    }
}
