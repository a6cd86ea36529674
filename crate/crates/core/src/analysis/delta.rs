//! Moment differences `Δ_l = E_Q[vec(QX₁)^{⊗l} − vec(QX₂)^{⊗l}]` under the
//! Haar measure.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{arg_err, Error, Result};
use crate::metric::optimal_rotation;
use crate::model::{haar_orthogonal, SeedSpec};

/// Largest tensor length `(dk)^l` accepted by [`delta_l_monte_carlo`].
pub const MAX_TENSOR_LEN: usize = 1_000_000;

/// `12(2d)^l ρ²`, valid for `l ≥ 2` when `ρ(X₁, X₂) < ‖X₁‖/3`.
pub fn delta_l_bound(d: usize, l: u32, rho: f64) -> Result<f64> {
    if l < 2 {
        return arg_err(format!("the moment bound needs l >= 2, got {l}"));
    }
    if !(rho >= 0.0) {
        return arg_err("rho must be nonnegative");
    }
    Ok(12.0 * (2.0 * d as f64).powi(l as i32) * rho * rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaEstimate {
    pub l: u32,
    pub samples: usize,
    /// `‖mean‖²` of the sampled tensor differences.
    pub squared_norm: f64,
    /// `squared_norm − mc_stderr_sq`, unbiased for `‖Δ_l‖²`.
    pub squared_norm_debiased: f64,
    /// `Σ_j Var_j / samples`, the expected `‖mean‖²` when `Δ_l = 0`.
    pub mc_stderr_sq: f64,
    /// `ρ(X₁, X₂)`, equal to `‖X₁ − X₂‖` after alignment.
    pub rho: f64,
}

fn tensor_power(v: &[f64], l: u32, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for _ in 0..l {
        let prev = std::mem::take(out);
        out.reserve(prev.len() * v.len());
        for p in &prev {
            for x in v {
                out.push(p * x);
            }
        }
    }
}

/// Monte-Carlo estimate of `‖Δ_l‖²` after aligning `X₂` to `X₁`.
pub fn delta_l_monte_carlo(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    l: u32,
    samples: usize,
    seed: SeedSpec,
) -> Result<DeltaEstimate> {
    if l == 0 {
        return arg_err("l must be >= 1");
    }
    if samples < 2 {
        return arg_err("need at least 2 samples");
    }
    let align = optimal_rotation(x1, x2)?;
    let x2 = &align.rotation * x2;
    let (d, k) = x1.shape();
    let len = (d * k)
        .checked_pow(l)
        .filter(|&n| n <= MAX_TENSOR_LEN)
        .ok_or_else(|| {
            Error::Resource(format!("(dk)^l exceeds {MAX_TENSOR_LEN} for dk={}, l={l}", d * k))
        })?;

    let mut rng = seed.rng();
    let mut sum = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    let (mut t1, mut t2) = (Vec::new(), Vec::new());
    for _ in 0..samples {
        let q = haar_orthogonal(d, &mut rng);
        let a = &q * x1;
        let b = &q * &x2;
        tensor_power(a.as_slice(), l, &mut t1);
        tensor_power(b.as_slice(), l, &mut t2);
        for j in 0..len {
            let diff = t1[j] - t2[j];
            sum[j] += diff;
            sum_sq[j] += diff * diff;
        }
    }
    let n = samples as f64;
    let mut squared_norm = 0.0;
    let mut var_sum = 0.0;
    for j in 0..len {
        let mean = sum[j] / n;
        squared_norm += mean * mean;
        var_sum += (sum_sq[j] / n - mean * mean).max(0.0) * n / (n - 1.0);
    }
    let mc_stderr_sq = var_sum / n;
    Ok(DeltaEstimate {
        l,
        samples,
        squared_norm,
        squared_norm_debiased: squared_norm - mc_stderr_sq,
        mc_stderr_sq,
        rho: align.distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_cloud;

    #[test]
    fn bound_examples() {
        assert_eq!(delta_l_bound(3, 2, 0.0).unwrap(), 0.0);
        assert!((delta_l_bound(3, 2, 0.1).unwrap() - 4.32).abs() < 1e-12);
        assert!((delta_l_bound(2, 3, 0.5).unwrap() - 192.0).abs() < 1e-12);
        assert!((delta_l_bound(2, 2, 0.1).unwrap() - 1.92).abs() < 1e-12);
        assert!(delta_l_bound(2, 1, 0.1).is_err());
    }

    #[test]
    fn identical_clouds_give_zero() {
        let x = sample_cloud(2, 3, SeedSpec::new(1, 0), false).unwrap();
        for l in 1..=3 {
            let e = delta_l_monte_carlo(x.matrix(), x.matrix(), l, 200, SeedSpec::new(1, 1)).unwrap();
            assert!(e.squared_norm < 1e-28, "{}", e.squared_norm);
        }
    }

    #[test]
    fn tensor_guard() {
        let x = sample_cloud(3, 40, SeedSpec::new(2, 0), false).unwrap();
        assert!(matches!(
            delta_l_monte_carlo(x.matrix(), x.matrix(), 3, 10, SeedSpec::new(0, 0)),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn tensor_power_layout() {
        let mut out = Vec::new();
        tensor_power(&[1.0, 2.0], 2, &mut out);
        assert_eq!(out, vec![1.0, 2.0, 2.0, 4.0]);
    }
}
