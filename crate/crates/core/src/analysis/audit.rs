//! Randomized audits of the stability bounds.
//!
//! Deterministic bounds must hold on every trial (up to a slack tolerance);
//! the concentration bound must fail on at most a `δ` fraction of trials.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{
    concentration_bound, gram_diff_upper_bound, gram_inversion_bound, tu_lipschitz_bound,
};
use crate::error::Result;
use crate::estimator::{debias_gram, psd_rank_d_project, GramAccumulator, GramEstimate};
use crate::linalg;
use crate::metric::procrustes_distance;
use crate::model::{derive_seed, haar_orthogonal, sample_cloud, Cloud, ObservationSampler};

/// Absolute slack allowed on deterministic bounds.
pub const DETERMINISTIC_TOLERANCE: f64 = 1e-8;

/// Bound multiplier applied to the audit named in [`AuditOptions::fault`].
const FAULT_SCALE: f64 = 0.05;

/// One line of audit output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub audit_name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest `observed − bound` over the trials.
    pub max_slack: f64,
    /// Slack tolerance (deterministic) or allowed violation fraction (probabilistic).
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AuditOptions {
    /// Audit whose bound is deliberately shrunk, to exercise failure reporting.
    pub fault: Option<String>,
}

impl AuditOptions {
    fn scale(&self, name: &str) -> f64 {
        match &self.fault {
            Some(f) if name.starts_with(f.as_str()) => FAULT_SCALE,
            _ => 1.0,
        }
    }
}

fn gaussian(d: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random full-rank cloud and a unit perturbation direction.
///
/// Half of the directions are Gaussian; the rest are `u_d wᵀ` with `w`
/// orthogonal to the row space, along which the inversion bounds are tightest.
fn cloud_and_direction(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let d = rng.random_range(1..=4);
        let k = rng.random_range(d..=d + 6);
        let x = gaussian(d, k, rng);
        let Ok(cloud) = Cloud::new(x.clone()) else {
            continue;
        };
        let mut dir = gaussian(d, k, rng);
        if k > d && rng.random_bool(0.5) {
            let Ok(linalg::ThinSvd { u, singular_values: sv, v_t }) = linalg::thin_svd(&x) else {
                continue;
            };
            let dmin = (0..d).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
            let mut w = gaussian(1, k, rng).transpose();
            let proj = v_t.transpose() * (&v_t * &w);
            w -= proj;
            dir = u.column(dmin) * w.transpose();
        }
        let n = dir.norm();
        if n > 0.0 && cloud.is_full_rank() {
            return (x, dir / n);
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

struct Outcome {
    slack: f64,
}

fn summarize(name: &str, outcomes: Vec<Outcome>, tolerance: f64) -> AuditRecord {
    let trials = outcomes.len();
    let violations = outcomes.iter().filter(|o| o.slack > tolerance).count();
    let max_slack = outcomes
        .iter()
        .map(|o| o.slack)
        .fold(f64::NEG_INFINITY, f64::max);
    AuditRecord {
        audit_name: name.to_string(),
        trials,
        violations,
        max_slack,
        tolerance,
        pass: violations == 0,
    }
}

/// `ρ ≤ (σ_d/√2)(1 − √(1 − 2‖G−G̃‖/σ_d²))` on pairs with `‖G−G̃‖ ≤ σ_d²/2`.
pub fn audit_gram_inversion(trials: usize, master: u64, opts: &AuditOptions) -> Result<AuditRecord> {
    let name = "gram_inversion";
    let scale = opts.scale(name);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Outcome> {
            let mut rng = derive_seed(master, 101, t as u64).rng();
            let (x, dir) = cloud_and_direction(&mut rng);
            let sigma_d = linalg::singular_values(&x).last().copied().unwrap();
            let mut step = sigma_d * log_uniform(&mut rng, 1e-4, 1.0);
            let (xt, gap) = loop {
                let xt = &x + &dir * step;
                let gap = linalg::gram_gap(&x, &xt);
                if gap <= sigma_d * sigma_d / 2.0 {
                    break (xt, gap);
                }
                step *= 0.5;
            };
            let xt = haar_orthogonal(x.nrows(), &mut rng) * xt;
            let rho = procrustes_distance(&x, &xt)?;
            let bound = gram_inversion_bound(sigma_d, gap)?.value.unwrap();
            Ok(Outcome {
                slack: rho - bound * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(name, outcomes, DETERMINISTIC_TOLERANCE))
}

/// `ρ ≤ L‖G−G̃‖/σ_d` on arbitrary full-rank pairs.
pub fn audit_tu_lipschitz(trials: usize, master: u64, opts: &AuditOptions) -> Result<AuditRecord> {
    let name = "tu_lipschitz";
    let scale = opts.scale(name);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Outcome> {
            let mut rng = derive_seed(master, 102, t as u64).rng();
            let (x, dir) = cloud_and_direction(&mut rng);
            let sigma_d = linalg::singular_values(&x).last().copied().unwrap();
            let step = sigma_d * log_uniform(&mut rng, 1e-4, 3.0);
            let xt = haar_orthogonal(x.nrows(), &mut rng) * (&x + &dir * step);
            let gap = linalg::gram_gap(&x, &xt);
            let rho = procrustes_distance(&x, &xt)?;
            let bound = tu_lipschitz_bound(sigma_d, gap)?.value.unwrap();
            Ok(Outcome {
                slack: rho - bound * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(name, outcomes, DETERMINISTIC_TOLERANCE))
}

/// `‖X₂ᵀX₂ − X₁ᵀX₁‖ ≤ (9/4)‖X₁‖_op ρ` on pairs with `ρ ≤ ‖X₁‖_op/4`.
pub fn audit_gram_diff(trials: usize, master: u64, opts: &AuditOptions) -> Result<AuditRecord> {
    let name = "gram_diff";
    let scale = opts.scale(name);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Outcome> {
            let mut rng = derive_seed(master, 103, t as u64).rng();
            let (x1, dir) = cloud_and_direction(&mut rng);
            let op = linalg::op_norm(&x1);
            let step = op * log_uniform(&mut rng, 1e-4, 0.25);
            let x2 = haar_orthogonal(x1.nrows(), &mut rng) * (&x1 + &dir * step);
            let rho = procrustes_distance(&x2, &x1)?;
            let report = gram_diff_upper_bound(op, rho)?;
            let bound = report
                .value
                .expect("rho <= step <= opnorm / 4 keeps the bound applicable");
            Ok(Outcome {
                slack: linalg::gram_gap(&x1, &x2) - bound * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(name, outcomes, DETERMINISTIC_TOLERANCE))
}

/// Setting for the concentration audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSetting {
    pub d: usize,
    pub k: usize,
    pub sigma: f64,
    pub n: usize,
    pub delta: f64,
}

/// Fraction of trials with `‖G̃_N − G‖_F` above the concentration bound.
pub fn audit_concentration(
    setting: ConcentrationSetting,
    trials: usize,
    master: u64,
    opts: &AuditOptions,
) -> Result<AuditRecord> {
    let ConcentrationSetting { d, k, sigma, n, delta } = setting;
    let name = format!("concentration_sigma{sigma}_n{n}");
    let scale = opts.scale(&name);
    let cloud = sample_cloud(d, k, derive_seed(master, 104, u64::MAX), true)?;
    let g = cloud.gram();
    let bound = concentration_bound(d, k, n, sigma, cloud.op_norm(), delta)?
        .value
        .unwrap()
        * scale;
    let cell = 1000 + (sigma.to_bits() % 1000) + n as u64;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Outcome> {
            let mut sampler = ObservationSampler::new(&cloud, sigma, derive_seed(master, cell, t as u64))?;
            let mut acc = GramAccumulator::new(d, k);
            for _ in 0..n {
                acc.push(&sampler.next_observation())?;
            }
            let m = GramEstimate::from_matrix(&acc.mean()?)?;
            let projected = psd_rank_d_project(&debias_gram(&m, sigma, d)?, d)?;
            Ok(Outcome {
                slack: (projected - &g).norm() - bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut record = summarize(&name, outcomes, 0.0);
    record.tolerance = delta;
    record.pass = record.violations as f64 <= delta * trials as f64;
    Ok(record)
}
