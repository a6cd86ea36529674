//! Stability bounds for Gram inversion and concentration of the Gram estimate.
//!
//! Each bound reports whether its hypotheses hold; outside them the value is
//! left unset instead of extrapolated.

use serde::Serialize;

use crate::error::{arg_err, Result};

/// `1/√(2(√2 − 1)) ≈ 1.0986841`.
pub const TU_LIPSCHITZ_CONSTANT: f64 = 1.098_684_113_467_81;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_name: &'static str,
    pub inputs: Vec<(&'static str, f64)>,
    /// Set iff `applicable`.
    pub value: Option<f64>,
    pub applicable: bool,
}

impl BoundReport {
    fn new(name: &'static str, inputs: Vec<(&'static str, f64)>, value: Option<f64>) -> Self {
        Self {
            bound_name: name,
            inputs,
            applicable: value.is_some(),
            value,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return arg_err(format!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return arg_err(format!("{name} must be nonnegative and finite, got {v}"));
    }
    Ok(())
}

/// `ρ ≤ (σ_d/√2)(1 − √(1 − 2‖G − G̃‖/σ_d²))`, valid when `‖G − G̃‖ ≤ σ_d²/2`.
pub fn gram_inversion_bound(sigma_d: f64, gram_gap: f64) -> Result<BoundReport> {
    positive("sigma_d", sigma_d)?;
    nonnegative("gram_gap", gram_gap)?;
    let inputs = vec![("sigma_d", sigma_d), ("gap", gram_gap)];
    let s2 = sigma_d * sigma_d;
    if gram_gap > s2 / 2.0 {
        return Ok(BoundReport::new("gram_inversion", inputs, None));
    }
    let x = 2.0 * gram_gap / s2;
    // 1 − √(1 − x) written without cancellation.
    let one_minus_root = x / (1.0 + (1.0 - x).max(0.0).sqrt());
    let value = sigma_d / std::f64::consts::SQRT_2 * one_minus_root;
    Ok(BoundReport::new("gram_inversion", inputs, Some(value)))
}

/// `ρ ≤ L ‖G − G̃‖ / σ_d` with `L = 1/√(2(√2 − 1))`.
pub fn tu_lipschitz_bound(sigma_d: f64, gram_gap: f64) -> Result<BoundReport> {
    positive("sigma_d", sigma_d)?;
    nonnegative("gram_gap", gram_gap)?;
    Ok(BoundReport::new(
        "tu_lipschitz",
        vec![("sigma_d", sigma_d), ("gap", gram_gap)],
        Some(TU_LIPSCHITZ_CONSTANT * gram_gap / sigma_d),
    ))
}

/// `‖X₂ᵀX₂ − X₁ᵀX₁‖ ≤ (9/4)‖X₁‖_op ρ`, valid when `ρ ≤ ‖X₁‖_op / 4`.
pub fn gram_diff_upper_bound(opnorm_x1: f64, rho: f64) -> Result<BoundReport> {
    positive("opnorm", opnorm_x1)?;
    nonnegative("rho", rho)?;
    let inputs = vec![("opnorm", opnorm_x1), ("rho", rho)];
    let value = (rho <= opnorm_x1 / 4.0).then_some(2.25 * opnorm_x1 * rho);
    Ok(BoundReport::new("gram_diff", inputs, value))
}

/// High-probability bound on `‖G̃_N − G‖_F`, holding with probability at least `1 − δ`:
///
/// `8√(2d) [ √((2‖X‖_op²σ² + dσ⁴)/N · k log(10/δ)) + σ²/N · k log(10/δ) ]`.
pub fn concentration_bound(
    d: usize,
    k: usize,
    n: usize,
    sigma: f64,
    opnorm_x: f64,
    delta: f64,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return arg_err(format!("delta must lie in (0, 1), got {delta}"));
    }
    if n == 0 || d == 0 || k == 0 {
        return arg_err("d, k and N must be >= 1");
    }
    nonnegative("sigma", sigma)?;
    nonnegative("opnorm", opnorm_x)?;
    let (df, kf, nf) = (d as f64, k as f64, n as f64);
    let s2 = sigma * sigma;
    let log_term = kf * (10.0 / delta).ln();
    let first = ((2.0 * opnorm_x * opnorm_x * s2 + df * s2 * s2) / nf * log_term).sqrt();
    let second = s2 / nf * log_term;
    let value = 8.0 * (2.0 * df).sqrt() * (first + second);
    Ok(BoundReport::new(
        "concentration",
        vec![
            ("d", df),
            ("k", kf),
            ("n", nf),
            ("sigma", sigma),
            ("opnorm", opnorm_x),
            ("delta", delta),
        ],
        Some(value),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_constant_value() {
        let l = 1.0 / (2.0 * (2f64.sqrt() - 1.0)).sqrt();
        assert!((TU_LIPSCHITZ_CONSTANT - l).abs() < 1e-15);
        assert!((l - 1.098_684_1).abs() < 1e-7);
    }

    #[test]
    fn gram_inversion_examples() {
        assert_eq!(gram_inversion_bound(1.0, 0.0).unwrap().value, Some(0.0));
        let b = gram_inversion_bound(2.0, 2.0).unwrap();
        assert!((b.value.unwrap() - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        let b = gram_inversion_bound(1.0, 0.18).unwrap();
        // (1/√2)(1 − √0.64) = 0.2/√2.
        assert!((b.value.unwrap() - 0.2 / 2f64.sqrt()).abs() < 1e-15);
        assert!((b.value.unwrap() - 0.141_421).abs() < 1e-6);
        let b = gram_inversion_bound(1.0, 0.6).unwrap();
        assert!(!b.applicable && b.value.is_none());
        assert!(gram_inversion_bound(0.0, 0.1).is_err());
        assert!(gram_inversion_bound(-1.0, 0.1).is_err());
    }

    #[test]
    fn tu_examples() {
        assert_eq!(tu_lipschitz_bound(1.0, 0.0).unwrap().value, Some(0.0));
        let v = tu_lipschitz_bound(1.0, 1.0).unwrap().value.unwrap();
        assert!((v - 1.0987).abs() < 1e-4);
        assert!(tu_lipschitz_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn inversion_bound_ordering_against_lipschitz_bound() {
        // The two bounds cross at gap/σ_d² = (1 − s²)/2 with s = 2√(√2−1) − 1.
        let s = 2.0 * (2f64.sqrt() - 1.0).sqrt() - 1.0;
        let crossover = (1.0 - s * s) / 2.0;
        assert!((crossover - 0.458_761_381).abs() < 1e-8);
        for i in 1..=100 {
            let sigma_d = 0.05 * i as f64;
            for j in 0..=100 {
                let ratio = 0.5 * j as f64 / 100.0;
                let gap = sigma_d * sigma_d * ratio;
                let a = gram_inversion_bound(sigma_d, gap).unwrap().value.unwrap();
                let b = tu_lipschitz_bound(sigma_d, gap).unwrap().value.unwrap();
                if ratio <= crossover {
                    assert!(a <= b * (1.0 + 1e-12), "sigma_d={sigma_d} gap={gap}: {a} > {b}");
                } else {
                    assert!(a > b, "sigma_d={sigma_d} gap={gap}: {a} <= {b}");
                }
            }
        }
    }

    #[test]
    fn gram_diff_examples() {
        assert_eq!(gram_diff_upper_bound(1.0, 0.0).unwrap().value, Some(0.0));
        assert_eq!(gram_diff_upper_bound(2.0, 0.5).unwrap().value, Some(2.25));
        assert!(!gram_diff_upper_bound(2.0, 0.51).unwrap().applicable);
        assert!(gram_diff_upper_bound(0.0, 0.1).is_err());
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(
            concentration_bound(3, 10, 5, 0.0, 1.0, 0.1).unwrap().value,
            Some(0.0)
        );
        let v = concentration_bound(1, 1, 1, 1.0, 1.0, 0.1).unwrap().value.unwrap();
        let ln100 = 100f64.ln();
        let expect = 8.0 * 2f64.sqrt() * ((3.0 * ln100).sqrt() + ln100);
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 94.15).abs() < 0.01);
        assert!(concentration_bound(1, 1, 1, 1.0, 1.0, 0.0).is_err());
        assert!(concentration_bound(1, 1, 1, 1.0, 1.0, 1.0).is_err());
    }
}
