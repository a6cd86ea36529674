//! Closed-form moments of the Gram-mean estimator and two baselines.

use nalgebra::DMatrix;

use crate::error::{arg_err, Result};

/// `((k+1)σ²/N)(kσ²d + ‖X‖²)`, the leading-order mean-squared error of
/// `Ĝ_N` with a single `‖X‖²` term.
///
/// Summing the diagonal of [`gram_mean_covariance`] gives
/// [`exact_gram_mse`], which carries `2‖X‖²`; the two agree to leading
/// order once `kσ²d ≫ ‖X‖²`.
pub fn expected_gram_mse(d: usize, k: usize, n: usize, sigma: f64, frob2_x: f64) -> f64 {
    let (d, k, n) = (d as f64, k as f64, n as f64);
    let s2 = sigma * sigma;
    (k + 1.0) * s2 / n * (k * s2 * d + frob2_x)
}

/// `E‖Ĝ_N − G‖² = ((k+1)σ²/N)(kσ²d + 2‖X‖²)`, the trace of the entry covariance.
pub fn exact_gram_mse(d: usize, k: usize, n: usize, sigma: f64, frob2_x: f64) -> f64 {
    let (d, k, n) = (d as f64, k as f64, n as f64);
    let s2 = sigma * sigma;
    (k + 1.0) * s2 / n * (k * s2 * d + 2.0 * frob2_x)
}

fn kron(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Covariance of entries `(s,t)` and `(u,v)` of `M̂_N`:
///
/// `(1/N)[σ²(δ_tv G_su + δ_sv G_tu + δ_tu G_sv + δ_su G_tv) + σ⁴d(δ_su δ_tv + δ_sv δ_tu)]`.
#[allow(clippy::too_many_arguments)]
pub fn gram_mean_covariance(
    g: &DMatrix<f64>,
    sigma: f64,
    d: usize,
    n: usize,
    s: usize,
    t: usize,
    u: usize,
    v: usize,
) -> Result<f64> {
    let k = g.nrows();
    if !g.is_square() {
        return arg_err("Gram matrix must be square");
    }
    if [s, t, u, v].iter().any(|&i| i >= k) {
        return arg_err(format!("index out of range for k = {k}"));
    }
    if n == 0 {
        return arg_err("N must be >= 1");
    }
    let s2 = sigma * sigma;
    let g_terms = kron(t, v) * g[(s, u)]
        + kron(s, v) * g[(t, u)]
        + kron(t, u) * g[(s, v)]
        + kron(s, u) * g[(t, v)];
    let noise = s2 * s2 * d as f64 * (kron(s, u) * kron(t, v) + kron(s, v) * kron(t, u));
    Ok((s2 * g_terms + noise) / n as f64)
}

/// `σ²dk/N`, the error of averaging de-rotated observations when the
/// rotations are known.
pub fn oracle_mle_mse(d: usize, k: usize, n: usize, sigma: f64) -> f64 {
    sigma * sigma * (d * k) as f64 / n as f64
}

/// Standard normal CDF via `erfc`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ(−‖X‖/σ)`: error probability of the optimal test for the sign `s` in
/// `Y = sQX + σE` with `Q` and `X` known.
pub fn sign_test_error(norm_x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return arg_err(format!("sigma must be positive, got {sigma}"));
    }
    if !(norm_x >= 0.0) {
        return arg_err(format!("norm must be nonnegative, got {norm_x}"));
    }
    Ok(std_normal_cdf(-norm_x / sigma))
}
