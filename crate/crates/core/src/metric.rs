//! Procrustes distance between clouds, optimal alignment, and a canonical
//! representative of each orbit.
//!
//! `ρ(X₁, X₂) = min_{Q ∈ O(d)} ‖X₁ − Q X₂‖_F`. The minimizer is the polar
//! factor `Q = UVᵀ` of `X₁X₂ᵀ = UΣVᵀ`, which gives
//! `ρ² = ‖X₁‖² + ‖X₂‖² − 2 Σᵢ σᵢ(X₁X₂ᵀ)`.

use nalgebra::DMatrix;

use crate::error::{arg_err, dim_err, Error, Result};

/// Optimal rotation of the second cloud onto the first, with the attained distance.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub rotation: DMatrix<f64>,
    pub distance: f64,
}

fn check_same_shape(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<()> {
    if x1.shape() != x2.shape() {
        return dim_err(format!(
            "clouds must share dimensions, got {:?} and {:?}",
            x1.shape(),
            x2.shape()
        ));
    }
    if x1.nrows() == 0 {
        return dim_err("clouds must have d >= 1");
    }
    Ok(())
}

/// `Q = UVᵀ` maximizing `⟨X₁, QX₂⟩` over `O(d)`.
pub fn optimal_rotation(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<Alignment> {
    check_same_shape(x1, x2)?;
    let cross = x1 * x2.transpose();
    let svd = crate::linalg::thin_svd(&cross)?;
    let rotation = svd.u * svd.v_t;
    let distance = (x1 - &rotation * x2).norm();
    Ok(Alignment { rotation, distance })
}

/// `ρ(X₁, X₂)`, evaluated as `‖X₁ − QX₂‖` at the optimal `Q`.
///
/// The direct residual is accurate to rounding relative to `‖X‖`; the
/// singular-value expansion in [`procrustes_distance_sq_formula`] cancels
/// catastrophically when the clouds share an orbit.
pub fn procrustes_distance(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<f64> {
    Ok(optimal_rotation(x1, x2)?.distance)
}

/// `max(0, ‖X₁‖² + ‖X₂‖² − 2 Σᵢ σᵢ(X₁X₂ᵀ))`, the squared distance by expansion.
pub fn procrustes_distance_sq_formula(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(x1, x2)?;
    let nuclear: f64 = crate::linalg::singular_values(&(x1 * x2.transpose()))
        .iter()
        .sum();
    let sq = x1.norm_squared() + x2.norm_squared() - 2.0 * nuclear;
    Ok(sq.max(0.0))
}

/// `ρ(X, X̂) / ‖X‖`.
pub fn relative_error(x: &DMatrix<f64>, xhat: &DMatrix<f64>) -> Result<f64> {
    let norm = x.norm();
    if norm == 0.0 {
        return arg_err("relative error is undefined for a zero reference cloud");
    }
    Ok(procrustes_distance(x, xhat)? / norm)
}

/// Upper-trapezoidal `R = QᵀX` with nonnegative diagonal on the leading
/// `d × d` block.
///
/// Two clouds in the same orbit map to the same `R`. Requires the leading
/// `d × d` block of `X` to be nonsingular (unpivoted QR).
pub fn canonical_representative(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = x.shape();
    if d == 0 || k < d {
        return dim_err(format!("canonical form needs k >= d >= 1, got d={d}, k={k}"));
    }
    let qr = x.clone().qr();
    let mut r = qr.r();
    let scale = crate::linalg::op_norm(x);
    for i in 0..d {
        let rii = r[(i, i)];
        if !(rii.abs() > crate::model::RANK_TOLERANCE * scale) {
            return Err(Error::Degeneracy(format!(
                "leading {d}x{d} block is singular (pivot {i} = {rii:e})"
            )));
        }
        if rii < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    // Exact zeros below the diagonal.
    for j in 0..d {
        for i in (j + 1)..d {
            r[(i, j)] = 0.0;
        }
    }
    Ok(r)
}
