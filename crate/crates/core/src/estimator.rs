//! The invariant-features estimator.
//!
//! 1. Average the observed Gram matrices: `M̂ = (1/N) Σ Y_iᵀY_i → XᵀX + dσ²I`.
//! 2. Take the top `d` eigenpairs `(λ_i, v_i)` of `M̂`.
//! 3. Scale: `α_i = √max(0, λ_i − dσ²)`, with `σ` given or estimated from the
//!    trailing eigenvalues.
//! 4. The estimate has rows `α_i v_iᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{self, SortedEigen};
use crate::model::{Cloud, ObservationBatch};

/// Threshold below which an eigenvalue makes a matrix "not PSD" in [`factor_gram`].
pub const PSD_TOLERANCE: f64 = 1e-6;

/// Observations stacked per flush of a [`GramAccumulator`].
const ACCUMULATOR_CHUNK: usize = 256;

/// A symmetric `k × k` Gram estimate with its sorted eigendecomposition.
#[derive(Debug, Clone)]
pub struct GramEstimate {
    pub matrix: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: DVector<f64>,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
}

impl GramEstimate {
    /// Symmetrizes `matrix` and attaches its eigendecomposition.
    pub fn from_matrix(matrix: &DMatrix<f64>) -> Result<Self> {
        let matrix = linalg::symmetrize(matrix);
        let SortedEigen { values, vectors } = linalg::sym_eigen_desc(&matrix)?;
        Ok(Self {
            matrix,
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Running sum of `YᵀY` over observations.
///
/// Observations are stacked row-wise into a buffer and folded in with one
/// matrix product per chunk; the reduction order depends only on the input
/// sequence.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    d: usize,
    k: usize,
    sum: DMatrix<f64>,
    buffer: DMatrix<f64>,
    buffered: usize,
    count: usize,
}

impl GramAccumulator {
    pub fn new(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            sum: DMatrix::zeros(k, k),
            buffer: DMatrix::zeros(ACCUMULATOR_CHUNK * d, k),
            buffered: 0,
            count: 0,
        }
    }

    pub fn push(&mut self, y: &DMatrix<f64>) -> Result<()> {
        if y.shape() != (self.d, self.k) {
            return dim_err(format!(
                "observation is {:?}, accumulator expects ({}, {})",
                y.shape(),
                self.d,
                self.k
            ));
        }
        let row0 = self.buffered * self.d;
        self.buffer.view_mut((row0, 0), (self.d, self.k)).copy_from(y);
        self.buffered += 1;
        self.count += 1;
        if self.buffered == ACCUMULATOR_CHUNK {
            self.flush();
        }
        Ok(())
    }

    fn flush(&mut self) {
        if self.buffered == 0 {
            return;
        }
        let rows = self.buffered * self.d;
        let block = self.buffer.rows(0, rows);
        self.sum += block.tr_mul(&block);
        self.buffered = 0;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(1/N) Σ YᵀY`, symmetrized.
    pub fn mean(mut self) -> Result<DMatrix<f64>> {
        if self.count == 0 {
            return arg_err("no observations accumulated");
        }
        self.flush();
        Ok(linalg::symmetrize(&(self.sum / self.count as f64)))
    }
}

/// `M̂ = (1/N) Σ Y_iᵀY_i`.
pub fn gram_mean(batch: &ObservationBatch) -> Result<GramEstimate> {
    if batch.observations.is_empty() {
        return arg_err("empty batch");
    }
    let mut acc = GramAccumulator::new(batch.d, batch.k);
    for y in &batch.observations {
        acc.push(y)?;
    }
    GramEstimate::from_matrix(&acc.mean()?)
}

fn check_rank_arg(d: usize, k: usize) -> Result<()> {
    if d == 0 {
        return arg_err("d must be >= 1");
    }
    if d > k {
        return arg_err(format!("d = {d} exceeds k = {k}"));
    }
    Ok(())
}

/// `Ĝ = M̂ − dσ²I`, the unbiased Gram estimate.
pub fn debias_gram(m: &GramEstimate, sigma: f64, d: usize) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    check_rank_arg(d, m.k())?;
    let k = m.k();
    Ok(&m.matrix - DMatrix::<f64>::identity(k, k) * (d as f64 * sigma * sigma))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return arg_err(format!("sigma must be finite and >= 0, got {sigma}"));
    }
    Ok(())
}

/// Output of the estimator.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// Rows are `α_i v_iᵀ`; rank deficient when some `α_i` is zero.
    pub cloud_estimate: Cloud,
    pub alphas: Vec<f64>,
    pub sigma_used: f64,
    pub sigma_estimated: bool,
    /// `λ_d − λ_{d+1}` of the Gram mean (`λ_d` itself when `k = d`).
    pub eigengap: f64,
    pub top_eigenvalues: Vec<f64>,
}

impl EstimateReport {
    /// The top-`d` eigenspace is well defined only with a positive gap.
    pub fn is_unique(&self) -> bool {
        self.eigengap > 0.0
    }

    pub fn sidecar(&self, n: usize) -> ReportSidecar {
        ReportSidecar {
            d: self.cloud_estimate.d(),
            k: self.cloud_estimate.k(),
            n,
            sigma_used: self.sigma_used,
            sigma_estimated: self.sigma_estimated,
            eigengap: self.eigengap,
            alphas: self.alphas.clone(),
            top_eigenvalues: self.top_eigenvalues.clone(),
        }
    }
}

/// JSON sidecar written next to an estimated cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSidecar {
    pub d: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma_used: f64,
    pub sigma_estimated: bool,
    pub eigengap: f64,
    pub alphas: Vec<f64>,
    pub top_eigenvalues: Vec<f64>,
}

/// Steps 2–4 of the estimator, starting from a Gram mean.
pub fn estimate_from_gram(
    m: &GramEstimate,
    d: usize,
    sigma: f64,
    sigma_estimated: bool,
) -> Result<EstimateReport> {
    check_sigma(sigma)?;
    check_rank_arg(d, m.k())?;
    let k = m.k();
    let shift = d as f64 * sigma * sigma;
    let top: Vec<f64> = m.eigenvalues.iter().take(d).copied().collect();
    let alphas: Vec<f64> = top.iter().map(|&l| (l - shift).max(0.0).sqrt()).collect();
    let mut x = DMatrix::zeros(d, k);
    for (i, &a) in alphas.iter().enumerate() {
        x.set_row(i, &(m.eigenvectors.column(i).transpose() * a));
    }
    let eigengap = if k > d {
        m.eigenvalues[d - 1] - m.eigenvalues[d]
    } else {
        m.eigenvalues[d - 1]
    };
    Ok(EstimateReport {
        cloud_estimate: Cloud::from_matrix_unchecked(x)?,
        alphas,
        sigma_used: sigma,
        sigma_estimated,
        eigengap,
        top_eigenvalues: top,
    })
}

/// Estimation with the noise level known.
pub fn estimate_with_sigma(batch: &ObservationBatch, sigma: f64) -> Result<EstimateReport> {
    let m = gram_mean(batch)?;
    estimate_from_gram(&m, batch.d, sigma, false)
}

/// `σ̂ = √((Tr M − λ₁ − … − λ_d) / (d(k − d)))`.
///
/// The trailing-eigenvalue mean of a PSD matrix is nonnegative; rounding
/// negatives are clamped to zero.
pub fn estimate_sigma(m: &GramEstimate, d: usize) -> Result<f64> {
    let k = m.k();
    check_rank_arg(d, k)?;
    if k == d {
        return arg_err("noise level cannot be estimated when k = d");
    }
    let top: f64 = m.eigenvalues.iter().take(d).sum();
    let trailing = m.matrix.trace() - top;
    Ok((trailing / (d * (k - d)) as f64).max(0.0).sqrt())
}

/// Estimation with the noise level estimated from the Gram mean.
pub fn estimate_unknown_sigma(batch: &ObservationBatch) -> Result<EstimateReport> {
    let m = gram_mean(batch)?;
    let sigma = estimate_sigma(&m, batch.d)?;
    estimate_from_gram(&m, batch.d, sigma, true)
}

/// `σ̂²` as the mean square of the `dN` scalars `(1/√k)(Y_i 1)_j`; returns `σ̂`.
///
/// Valid for centered clouds (`X1 = 0`). Otherwise the estimate of `σ̂²` is
/// biased upward by `‖X1‖² / (dk)`.
pub fn estimate_sigma_centered(batch: &ObservationBatch) -> Result<f64> {
    if batch.observations.is_empty() {
        return arg_err("empty batch");
    }
    let scale = 1.0 / (batch.k as f64).sqrt();
    let mut sum_sq = 0.0;
    for y in &batch.observations {
        for row in y.row_iter() {
            let s = row.sum() * scale;
            sum_sq += s * s;
        }
    }
    Ok((sum_sq / (batch.d * batch.n) as f64).sqrt())
}

/// `Σ_{i≤d} max(0, λ_i) v_i v_iᵀ` for the top `d` eigenpairs of `G`.
pub fn psd_rank_d_project(g: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if !g.is_square() {
        return dim_err("projection needs a square matrix");
    }
    check_rank_arg(d, g.nrows())?;
    let e = linalg::sym_eigen_desc(g)?;
    let k = g.nrows();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..d {
        let l = e.values[i];
        if l > 0.0 {
            let v = e.vectors.column(i);
            out += v * v.transpose() * l;
        }
    }
    Ok(linalg::symmetrize(&out))
}

/// Rank-`d` factor `X̂` with `X̂ᵀX̂` the best rank-`d` PSD approximation of `G`.
///
/// Rows are the top eigenvectors scaled by `√λ`. Fails on eigenvalues below
/// `−PSD_TOLERANCE`. A zero matrix yields the (rank-deficient) zero cloud.
pub fn factor_gram(g: &DMatrix<f64>, d: usize) -> Result<Cloud> {
    if !g.is_square() {
        return dim_err("Gram matrix must be square");
    }
    check_rank_arg(d, g.nrows())?;
    let m = GramEstimate::from_matrix(g)?;
    let min = m.eigenvalues[m.k() - 1];
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd(min));
    }
    Ok(estimate_from_gram(&m, d, 0.0, false)?.cloud_estimate)
}

/// Known-rotation estimator `(1/N) Σ Q_iᵀ Y_i`.
pub fn oracle_mle(rotations: &[DMatrix<f64>], observations: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if rotations.len() != observations.len() {
        return dim_err("one rotation per observation is required");
    }
    let Some(first) = observations.first() else {
        return arg_err("empty batch");
    };
    let mut sum = DMatrix::zeros(first.nrows(), first.ncols());
    for (q, y) in rotations.iter().zip(observations) {
        if q.shape() != (y.nrows(), y.nrows()) || y.shape() != first.shape() {
            return dim_err("rotation and observation shapes disagree");
        }
        sum += q.tr_mul(y);
    }
    Ok(sum / observations.len() as f64)
}

/// Likelihood-ratio decision between `Y = X + σE` and `Y = −X + σE`:
/// `+1` iff `⟨Y, X⟩ > 0`.
pub fn sign_decision(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<i8> {
    if y.shape() != x.shape() {
        return dim_err("observation and cloud shapes disagree");
    }
    Ok(if y.dot(x) > 0.0 { 1 } else { -1 })
}
