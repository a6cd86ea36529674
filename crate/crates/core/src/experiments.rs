//! Seeded Monte-Carlo campaigns and their CSV / JSON-lines output.
//!
//! Every trial draws its randomness from [`derive_seed`] on its
//! `(cell, repetition)` coordinates and results are reduced in a fixed order,
//! so outputs do not depend on the thread count or on scheduling.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::audit::{
    audit_concentration, audit_gram_diff, audit_gram_inversion, audit_tu_lipschitz,
    ConcentrationSetting,
};
use crate::analysis::{expected_gram_mse, oracle_mle_mse, sign_test_error, AuditOptions, AuditRecord};
use crate::error::{arg_err, Error, Result};
use crate::estimator::{
    debias_gram, estimate_from_gram, estimate_sigma, oracle_mle, sign_decision, GramAccumulator,
    GramEstimate,
};
use crate::io::fmt_f64;
use crate::metric::procrustes_distance;
pub use crate::model::derive_seed;
use crate::model::{
    haar_orthogonal, sample_cloud, sample_gram_sum_exact, Cloud, ObservationSampler, SeedSpec,
};

/// Marks cloud seeds so that they never collide with observation seeds.
const CLOUD_TAG: u64 = 1 << 63;

/// Largest `N` simulated observation by observation under [`Sampler::Auto`].
pub const DIRECT_SAMPLING_LIMIT: u64 = 10_000;

pub const GRID_CSV_HEADER: &str = "sigma,n,mean_rel_error,std_rel_error,repetitions";
pub const SIGMA_CSV_HEADER: &str = "n,mean_rel_err_sigma2,std_rel_err_sigma2,repetitions";
pub const MSE_CSV_HEADER: &str =
    "sigma,n,empirical_gram_mse,formula_gram_mse,empirical_rho2,mc_stderr";

fn default_cap() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Phase-transition sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub d: usize,
    pub k: usize,
    pub sigma_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub sigma_known: bool,
    #[serde(default = "default_cap")]
    pub error_cap: f64,
    /// Draw a fresh cloud for every repetition instead of one per sweep.
    #[serde(default)]
    pub resample_cloud: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d: 3,
            k: 100,
            sigma_grid: log_grid(1e-2, 1e2, 16),
            n_grid: log_grid(10.0, 1e5, 16).into_iter().map(|n| n.round() as usize).collect(),
            repetitions: 10,
            master_seed: 0,
            sigma_known: true,
            error_cap: 1.0,
            resample_cloud: false,
        }
    }
}

fn check_increasing<T: PartialOrd + Copy>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} must be nonempty")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn check_dims(d: usize, k: usize) -> Result<()> {
    if d == 0 || k < d {
        return Err(Error::Config(format!("need 1 <= d <= k, got d={d}, k={k}")));
    }
    Ok(())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.d, self.k)?;
        check_increasing("sigma_grid", &self.sigma_grid)?;
        check_increasing("n_grid", &self.n_grid)?;
        if self.sigma_grid.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("sigma_grid entries must be positive".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::Config("n_grid entries must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if !self.sigma_known && self.k == self.d {
            return Err(Error::Config("sigma_known = false requires k > d".into()));
        }
        if !(self.error_cap > 0.0) {
            return Err(Error::Config("error_cap must be positive".into()));
        }
        Ok(())
    }
}

/// `len` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    match len {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..len)
                .map(|i| match i {
                    0 => lo,
                    i if i == len - 1 => hi,
                    i => (a + (b - a) * i as f64 / (len - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// Runs `f` on a pool with `threads` workers (the global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => arg_err("thread count must be >= 1"),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Resource(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn collect_chunk<T: Copy>(chunk: &[Result<T>]) -> std::result::Result<Vec<T>, &Error> {
    chunk.iter().map(|r| r.as_ref().copied()).collect()
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Gram mean of `n` observations, simulated one by one.
fn simulate_gram_mean(cloud: &Cloud, sigma: f64, n: usize, seed: SeedSpec) -> Result<GramEstimate> {
    let mut sampler = ObservationSampler::new(cloud, sigma, seed)?;
    let mut acc = GramAccumulator::new(cloud.d(), cloud.k());
    for _ in 0..n {
        acc.push(&sampler.next_observation())?;
    }
    GramEstimate::from_matrix(&acc.mean()?)
}

/// How Gram means are generated in the MSE campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Observation by observation.
    Direct,
    /// From the exact law of `Σ Y_iᵀY_i`, in time independent of `N`.
    Exact,
    /// `Direct` up to [`DIRECT_SAMPLING_LIMIT`] observations, `Exact` beyond.
    #[default]
    Auto,
}

fn sampled_gram_mean(
    cloud: &Cloud,
    sigma: f64,
    n: u64,
    seed: SeedSpec,
    sampler: Sampler,
) -> Result<GramEstimate> {
    let direct = match sampler {
        Sampler::Direct => true,
        Sampler::Exact => false,
        Sampler::Auto => n <= DIRECT_SAMPLING_LIMIT,
    };
    if direct {
        let n = usize::try_from(n).map_err(|_| Error::Resource("N too large".into()))?;
        simulate_gram_mean(cloud, sigma, n, seed)
    } else {
        let sum = sample_gram_sum_exact(cloud, sigma, n, &mut seed.rng())?;
        GramEstimate::from_matrix(&(sum / n as f64))
    }
}

/// One cell of a phase-transition grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sigma: f64,
    pub n: usize,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub repetitions: usize,
    /// Set when the cell aborted; the numeric fields are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Row-major over `(sigma, n)`: all `n` for the first `sigma`, and so on.
    pub rows: Vec<GridRow>,
    pub config: SweepConfig,
}

impl GridResult {
    pub fn row(&self, i_sigma: usize, i_n: usize) -> &GridRow {
        &self.rows[i_sigma * self.config.n_grid.len() + i_n]
    }
}

fn error_row(sigma: f64, n: usize, e: &Error) -> GridRow {
    GridRow {
        sigma,
        n,
        mean_rel_error: f64::NAN,
        std_rel_error: f64::NAN,
        repetitions: 0,
        error: Some(e.to_string()),
    }
}

/// Capped relative Procrustes error on each `(σ, N)` cell of the grid.
pub fn run_phase_transition(config: &SweepConfig) -> Result<GridResult> {
    config.validate()?;
    let fixed = if config.resample_cloud {
        None
    } else {
        Some(sample_cloud(
            config.d,
            config.k,
            derive_seed(config.master_seed, CLOUD_TAG, u64::MAX),
            true,
        )?)
    };
    let n_len = config.n_grid.len();
    let cells = config.sigma_grid.len() * n_len;
    let reps = config.repetitions;
    let trial = |cell: usize, rep: usize| -> Result<f64> {
        let sigma = config.sigma_grid[cell / n_len];
        let n = config.n_grid[cell % n_len];
        let fresh;
        let cloud = match &fixed {
            Some(c) => c,
            None => {
                fresh = sample_cloud(
                    config.d,
                    config.k,
                    derive_seed(config.master_seed, CLOUD_TAG | cell as u64, rep as u64),
                    true,
                )?;
                &fresh
            }
        };
        let seed = derive_seed(config.master_seed, cell as u64, rep as u64);
        let m = simulate_gram_mean(cloud, sigma, n, seed)?;
        let report = if config.sigma_known {
            estimate_from_gram(&m, config.d, sigma, false)?
        } else {
            let s = estimate_sigma(&m, config.d)?;
            estimate_from_gram(&m, config.d, s, true)?
        };
        let rho = procrustes_distance(cloud.matrix(), report.cloud_estimate.matrix())?;
        Ok((rho / cloud.frobenius_norm()).min(config.error_cap))
    };
    let outcomes: Vec<Result<f64>> = (0..cells * reps)
        .into_par_iter()
        .map(|t| trial(t / reps, t % reps))
        .collect();
    let rows = outcomes
        .chunks(reps)
        .enumerate()
        .map(|(cell, chunk)| {
            let sigma = config.sigma_grid[cell / n_len];
            let n = config.n_grid[cell % n_len];
            match collect_chunk(chunk) {
                Ok(errs) => {
                    let (mean, std) = mean_std(&errs);
                    GridRow {
                        sigma,
                        n,
                        mean_rel_error: mean,
                        std_rel_error: std,
                        repetitions: reps,
                        error: None,
                    }
                }
                Err(e) => error_row(sigma, n, e),
            }
        })
        .collect();
    Ok(GridResult {
        rows,
        config: config.clone(),
    })
}

/// Noise-level estimation benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaBenchConfig {
    pub d: usize,
    pub k: usize,
    pub sigma: f64,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub resample_cloud: bool,
}

impl Default for SigmaBenchConfig {
    fn default() -> Self {
        Self {
            d: 3,
            k: 100,
            sigma: 1.0,
            n_grid: vec![100, 1000, 10_000],
            repetitions: 100,
            master_seed: 0,
            resample_cloud: false,
        }
    }
}

impl SigmaBenchConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.d, self.k)?;
        if self.k == self.d {
            return Err(Error::Config("noise estimation requires k > d".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config("sigma must be positive".into()));
        }
        check_increasing("n_grid", &self.n_grid)?;
        if self.n_grid[0] == 0 {
            return Err(Error::Config("n_grid entries must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaBenchRow {
    pub n: usize,
    pub mean_rel_err_sigma2: f64,
    pub std_rel_err_sigma2: f64,
    pub repetitions: usize,
    /// Per-repetition `|σ² − σ̂²|/σ²`.
    pub errors: Vec<f64>,
    pub error: Option<String>,
}

/// Relative error of `σ̂²` for each `N` of the grid.
pub fn run_sigma_benchmark(config: &SigmaBenchConfig) -> Result<Vec<SigmaBenchRow>> {
    config.validate()?;
    let cloud_for = |cell: usize, rep: usize| {
        let seed = if config.resample_cloud {
            derive_seed(config.master_seed, CLOUD_TAG | cell as u64, rep as u64)
        } else {
            derive_seed(config.master_seed, CLOUD_TAG, u64::MAX)
        };
        sample_cloud(config.d, config.k, seed, false)
    };
    let fixed = cloud_for(0, 0)?;
    let reps = config.repetitions;
    let s2 = config.sigma * config.sigma;
    let outcomes: Vec<Result<f64>> = (0..config.n_grid.len() * reps)
        .into_par_iter()
        .map(|t| {
            let (cell, rep) = (t / reps, t % reps);
            let fresh;
            let cloud = if config.resample_cloud {
                fresh = cloud_for(cell, rep)?;
                &fresh
            } else {
                &fixed
            };
            let seed = derive_seed(config.master_seed, cell as u64, rep as u64);
            let m = simulate_gram_mean(cloud, config.sigma, config.n_grid[cell], seed)?;
            let s = estimate_sigma(&m, config.d)?;
            Ok((s2 - s * s).abs() / s2)
        })
        .collect();
    Ok(outcomes
        .chunks(reps)
        .enumerate()
        .map(|(cell, chunk)| {
            let n = config.n_grid[cell];
            match collect_chunk(chunk) {
                Ok(errors) => {
                    let (mean, std) = mean_std(&errors);
                    SigmaBenchRow {
                        n,
                        mean_rel_err_sigma2: mean,
                        std_rel_err_sigma2: std,
                        repetitions: reps,
                        errors,
                        error: None,
                    }
                }
                Err(e) => SigmaBenchRow {
                    n,
                    mean_rel_err_sigma2: f64::NAN,
                    std_rel_err_sigma2: f64::NAN,
                    repetitions: 0,
                    errors: vec![],
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Gram-MSE validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseConfig {
    pub d: usize,
    pub k: usize,
    pub sigma_list: Vec<f64>,
    pub n_list: Vec<u64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default = "default_true")]
    pub unit_frobenius: bool,
}

impl Default for MseConfig {
    fn default() -> Self {
        Self {
            d: 2,
            k: 10,
            sigma_list: vec![2.0],
            n_list: vec![100],
            trials: 2000,
            master_seed: 0,
            sampler: Sampler::Auto,
            unit_frobenius: true,
        }
    }
}

/// Smallest trial count accepted by the moment and audit campaigns.
pub const MIN_TRIALS: usize = 100;

impl MseConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.d, self.k)?;
        check_increasing("sigma_list", &self.sigma_list)?;
        check_increasing("n_list", &self.n_list)?;
        if self.sigma_list.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("sigma_list entries must be positive".into()));
        }
        if self.n_list[0] == 0 {
            return Err(Error::Config("n_list entries must be positive".into()));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::Config(format!("trials must be >= {MIN_TRIALS}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub sigma: f64,
    pub n: u64,
    /// Mean of `‖Ĝ_N − G‖²_F`.
    pub empirical_gram_mse: f64,
    pub formula_gram_mse: f64,
    /// Mean of `ρ([X], [X̂])²` with `σ` known.
    pub empirical_rho2: f64,
    /// Standard error of `empirical_gram_mse`.
    pub mc_stderr: f64,
    pub rho2_stderr: f64,
    pub error: Option<String>,
}

/// Least-squares slope of `log E[ρ²]` against `log σ` at one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub n: u64,
    /// `"low"` for `σ < 1`, `"high"` for `σ > 1`.
    pub regime: String,
    pub sigmas: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseResult {
    pub rows: Vec<MseRow>,
    pub slopes: Vec<SlopeFit>,
    pub config: MseConfig,
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Empirical Gram MSE and `E[ρ²]` against the closed forms.
pub fn run_mse_validation(config: &MseConfig) -> Result<MseResult> {
    config.validate()?;
    let cloud = sample_cloud(
        config.d,
        config.k,
        derive_seed(config.master_seed, CLOUD_TAG, u64::MAX),
        config.unit_frobenius,
    )?;
    let g = cloud.gram();
    let frob2 = cloud.frobenius_norm().powi(2);
    let n_len = config.n_list.len();
    let trials = config.trials;
    let cells = config.sigma_list.len() * n_len;
    let outcomes: Vec<Result<(f64, f64)>> = (0..cells * trials)
        .into_par_iter()
        .map(|t| {
            let (cell, rep) = (t / trials, t % trials);
            let sigma = config.sigma_list[cell / n_len];
            let n = config.n_list[cell % n_len];
            let seed = derive_seed(config.master_seed, cell as u64, rep as u64);
            let m = sampled_gram_mean(&cloud, sigma, n, seed, config.sampler)?;
            let gram_err = (debias_gram(&m, sigma, config.d)? - &g).norm_squared();
            let est = estimate_from_gram(&m, config.d, sigma, false)?;
            let rho = procrustes_distance(cloud.matrix(), est.cloud_estimate.matrix())?;
            Ok((gram_err, rho * rho))
        })
        .collect();
    let rows: Vec<MseRow> = outcomes
        .chunks(trials)
        .enumerate()
        .map(|(cell, chunk)| {
            let sigma = config.sigma_list[cell / n_len];
            let n = config.n_list[cell % n_len];
            let formula = expected_gram_mse(config.d, config.k, n as usize, sigma, frob2);
            match collect_chunk(chunk) {
                Ok(v) => {
                    let (gm, gs) = mean_std(&v.iter().map(|p| p.0).collect::<Vec<_>>());
                    let (rm, rs) = mean_std(&v.iter().map(|p| p.1).collect::<Vec<_>>());
                    let sq = (trials as f64).sqrt();
                    MseRow {
                        sigma,
                        n,
                        empirical_gram_mse: gm,
                        formula_gram_mse: formula,
                        empirical_rho2: rm,
                        mc_stderr: gs / sq,
                        rho2_stderr: rs / sq,
                        error: None,
                    }
                }
                Err(e) => MseRow {
                    sigma,
                    n,
                    empirical_gram_mse: f64::NAN,
                    formula_gram_mse: formula,
                    empirical_rho2: f64::NAN,
                    mc_stderr: f64::NAN,
                    rho2_stderr: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut slopes = Vec::new();
    for (i_n, &n) in config.n_list.iter().enumerate() {
        for (regime, low) in [("low", true), ("high", false)] {
            let pts: Vec<(f64, f64)> = config
                .sigma_list
                .iter()
                .enumerate()
                .filter(|(_, &s)| if low { s < 1.0 } else { s > 1.0 })
                .map(|(i_s, &s)| (s, rows[i_s * n_len + i_n].empirical_rho2))
                .collect();
            if pts.len() < 2 || pts.iter().any(|p| !(p.1 > 0.0)) {
                continue;
            }
            let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            slopes.push(SlopeFit {
                n,
                regime: regime.to_string(),
                sigmas: pts.iter().map(|p| p.0).collect(),
                slope: fit_slope(&lx, &ly),
            });
        }
    }
    Ok(MseResult {
        rows,
        slopes,
        config: config.clone(),
    })
}

/// Empirical mean and standard error of a Monte-Carlo quantity, with its
/// closed-form counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub empirical: f64,
    pub stderr: f64,
    pub formula: f64,
    pub trials: usize,
}

/// MSE `‖X̂ − X‖²` of the known-rotation estimator against `σ²dk/N`.
pub fn run_oracle_baseline(
    d: usize,
    k: usize,
    sigma: f64,
    n: usize,
    trials: usize,
    master_seed: u64,
) -> Result<MonteCarloCheck> {
    check_dims(d, k)?;
    if n == 0 || trials == 0 {
        return arg_err("n and trials must be >= 1");
    }
    let cloud = sample_cloud(d, k, derive_seed(master_seed, CLOUD_TAG, u64::MAX), true)?;
    let errs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut sampler = ObservationSampler::new(&cloud, sigma, derive_seed(master_seed, 0, t as u64))?;
            let (qs, ys): (Vec<_>, Vec<_>) = (0..n).map(|_| sampler.next_with_rotation()).unzip();
            Ok((oracle_mle(&qs, &ys)? - cloud.matrix()).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&errs);
    Ok(MonteCarloCheck {
        empirical: mean,
        stderr: std / (trials as f64).sqrt(),
        formula: oracle_mle_mse(d, k, n, sigma),
        trials,
    })
}

/// Error rate of the likelihood-ratio test for `s ∈ {±1}` in
/// `Y = sQX + σE` with `Q` and `X` known, against `Φ(−‖X‖/σ)`.
pub fn run_sign_test(
    d: usize,
    k: usize,
    norm_x: f64,
    sigma: f64,
    trials: usize,
    master_seed: u64,
) -> Result<MonteCarloCheck> {
    check_dims(d, k)?;
    if trials == 0 || !(norm_x > 0.0) || !(sigma > 0.0) {
        return arg_err("need trials >= 1, norm_x > 0 and sigma > 0");
    }
    let mut rng = derive_seed(master_seed, CLOUD_TAG, u64::MAX).rng();
    let dir = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = &dir * (norm_x / dir.norm());
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let wrong: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_seed(master_seed, 1, c as u64).rng();
            let mut wrong = 0usize;
            for _ in 0..CHUNK.min(trials - c * CHUNK) {
                let qx = haar_orthogonal(d, &mut rng) * &x;
                let s: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
                let y = DMatrix::from_fn(d, k, |i, j| {
                    f64::from(s) * qx[(i, j)] + sigma * rng.sample::<f64, _>(StandardNormal)
                });
                if sign_decision(&y, &qx)? != s {
                    wrong += 1;
                }
            }
            Ok(wrong)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    let p = wrong as f64 / trials as f64;
    Ok(MonteCarloCheck {
        empirical: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        formula: sign_test_error(norm_x, sigma)?,
        trials,
    })
}

/// Concentration-audit settings used by [`run_stability_audit`].
pub const CONCENTRATION_SETTINGS: [ConcentrationSetting; 2] = [
    ConcentrationSetting { d: 2, k: 10, sigma: 1.0, n: 1000, delta: 0.1 },
    ConcentrationSetting { d: 2, k: 10, sigma: 0.5, n: 200, delta: 0.1 },
];

/// All bound audits, in a fixed order.
pub fn run_stability_audit(
    trials: usize,
    master_seed: u64,
    opts: &AuditOptions,
) -> Result<Vec<AuditRecord>> {
    if trials < MIN_TRIALS {
        return arg_err(format!("trials must be >= {MIN_TRIALS}"));
    }
    let mut out = vec![
        audit_gram_inversion(trials, master_seed, opts)?,
        audit_tu_lipschitz(trials, master_seed, opts)?,
        audit_gram_diff(trials, master_seed, opts)?,
    ];
    for s in CONCENTRATION_SETTINGS {
        out.push(audit_concentration(s, trials, master_seed, opts)?);
    }
    Ok(out)
}

pub fn grid_csv(result: &GridResult) -> String {
    let mut out = format!("{GRID_CSV_HEADER}\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.sigma),
            r.n,
            fmt_f64(r.mean_rel_error),
            fmt_f64(r.std_rel_error),
            r.repetitions
        );
    }
    out
}

pub fn sigma_bench_csv(rows: &[SigmaBenchRow]) -> String {
    let mut out = format!("{SIGMA_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.n,
            fmt_f64(r.mean_rel_err_sigma2),
            fmt_f64(r.std_rel_err_sigma2),
            r.repetitions
        );
    }
    out
}

pub fn mse_csv(result: &MseResult) -> String {
    let mut out = format!("{MSE_CSV_HEADER}\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.sigma),
            r.n,
            fmt_f64(r.empirical_gram_mse),
            fmt_f64(r.formula_gram_mse),
            fmt_f64(r.empirical_rho2),
            fmt_f64(r.mc_stderr)
        );
    }
    out
}

pub fn audit_jsonl(records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit records serialize"));
        out.push('\n');
    }
    out
}
