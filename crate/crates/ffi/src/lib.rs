//! C ABI for the cloudorbit library.
//!
//! Objects are opaque handles created by `co_*_new`/`co_*_sample`/
//! `co_estimate` and released by the matching `co_*_free`. Every fallible
//! function returns a [`CoStatus`]; on failure a message is available from
//! [`co_last_error_message`] on the same thread. Matrices cross the boundary
//! as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cloudorbit::analysis::{
    concentration_bound, delta_l_bound, expected_gram_mse, gram_diff_upper_bound,
    gram_inversion_bound, oracle_mle_mse, sign_test_error, tu_lipschitz_bound, BoundReport,
};
use cloudorbit::estimator::{estimate_unknown_sigma, estimate_with_sigma};
use cloudorbit::metric::{procrustes_distance, relative_error};
use cloudorbit::model::{sample_cloud, sample_observations};
use cloudorbit::{Cloud, EstimateReport, Error, ObservationBatch, SeedSpec};
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoStatus {
    CoOk = 0,
    CoErrNullPointer = 1,
    CoErrDimension = 2,
    CoErrArgument = 3,
    CoErrDegeneracy = 4,
    CoErrNotPsd = 5,
    CoErrNumerical = 6,
    CoErrResource = 7,
    CoErrConfig = 8,
    CoErrParse = 9,
    CoErrIo = 10,
    CoErrBufferTooSmall = 11,
    CoErrPanic = 12,
}

/// Ground-truth or estimated point cloud.
pub struct CoCloud {
    inner: Cloud,
}

/// Batch of noisy, randomly rotated observations of a cloud.
pub struct CoBatch {
    inner: ObservationBatch,
}

/// Estimator output.
pub struct CoReport {
    inner: EstimateReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CoStatus {
    match e {
        Error::Dimension(_) => CoStatus::CoErrDimension,
        Error::Argument(_) => CoStatus::CoErrArgument,
        Error::Degeneracy(_) => CoStatus::CoErrDegeneracy,
        Error::NotPsd(_) => CoStatus::CoErrNotPsd,
        Error::Numerical(_) => CoStatus::CoErrNumerical,
        Error::Resource(_) => CoStatus::CoErrResource,
        Error::Config(_) => CoStatus::CoErrConfig,
        Error::Parse(_) => CoStatus::CoErrParse,
        Error::Io(_) => CoStatus::CoErrIo,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CoStatus::CoOk
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for {name}"));
            CoStatus::CoErrNullPointer
        }
        Ok(Err(Failure::Buffer(needed))) => {
            set_error(format!("buffer too small: {needed} elements required"));
            CoStatus::CoErrBufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            CoStatus::CoErrPanic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn write_out<T>(p: *mut T, name: &'static str, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf` (truncating to `len` bytes). Returns the full message length
/// excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn co_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a `d × k` cloud from row-major `data` (length `d·k`). The cloud
/// must have rank `d`.
///
/// # Safety
/// `data` must be valid for `d·k` reads; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_cloud_new(
    d: usize,
    k: usize,
    data: *const f64,
    out: *mut *mut CoCloud,
) -> CoStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let len = d
            .checked_mul(k)
            .ok_or_else(|| Error::Dimension("d*k overflows".into()))?;
        let slice = std::slice::from_raw_parts(data, len);
        let cloud = Cloud::new(DMatrix::from_row_slice(d, k, slice))?;
        write_out(out, "out", Box::into_raw(Box::new(CoCloud { inner: cloud })))
    })
}

/// Draws a random cloud with i.i.d. standard normal entries, scaled to unit
/// Frobenius norm when `unit_frobenius` is true.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_cloud_sample(
    d: usize,
    k: usize,
    master_seed: u64,
    stream_index: u64,
    unit_frobenius: bool,
    out: *mut *mut CoCloud,
) -> CoStatus {
    guard(|| {
        let cloud = sample_cloud(d, k, SeedSpec::new(master_seed, stream_index), unit_frobenius)?;
        write_out(out, "out", Box::into_raw(Box::new(CoCloud { inner: cloud })))
    })
}

/// # Safety
/// `cloud` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn co_cloud_free(cloud: *mut CoCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// # Safety
/// `cloud` must be a live handle; `d` and `k` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn co_cloud_dims(cloud: *const CoCloud, d: *mut usize, k: *mut usize) -> CoStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        write_out(d, "d", c.inner.d())?;
        write_out(k, "k", c.inner.k())
    })
}

/// Copies the cloud into `buf` in row-major order; `len` must be at least
/// `d·k`.
///
/// # Safety
/// `cloud` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn co_cloud_copy_data(cloud: *const CoCloud, buf: *mut f64, len: usize) -> CoStatus {
    guard(|| {
        let c = &deref(cloud, "cloud")?.inner;
        let needed = c.d() * c.k();
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if len < needed {
            return Err(Failure::Buffer(needed));
        }
        let m = c.matrix();
        for i in 0..c.d() {
            for j in 0..c.k() {
                *buf.add(i * c.k() + j) = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// `min_Q ‖X1 − Q X2‖_F` over the orthogonal group.
///
/// # Safety
/// `x1` and `x2` must be live handles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_procrustes_distance(
    x1: *const CoCloud,
    x2: *const CoCloud,
    out: *mut f64,
) -> CoStatus {
    guard(|| {
        let a = deref(x1, "x1")?;
        let b = deref(x2, "x2")?;
        write_out(out, "out", procrustes_distance(a.inner.matrix(), b.inner.matrix())?)
    })
}

/// Procrustes distance divided by `‖X‖_F`.
///
/// # Safety
/// `x` and `xhat` must be live handles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_relative_error(
    x: *const CoCloud,
    xhat: *const CoCloud,
    out: *mut f64,
) -> CoStatus {
    guard(|| {
        let a = deref(x, "x")?;
        let b = deref(xhat, "xhat")?;
        write_out(out, "out", relative_error(a.inner.matrix(), b.inner.matrix())?)
    })
}

/// Draws `n` observations `Q_i X + σ E_i` of `cloud`.
///
/// # Safety
/// `cloud` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_batch_sample(
    cloud: *const CoCloud,
    sigma: f64,
    n: usize,
    master_seed: u64,
    stream_index: u64,
    out: *mut *mut CoBatch,
) -> CoStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        let batch = sample_observations(&c.inner, sigma, n, SeedSpec::new(master_seed, stream_index))?;
        write_out(out, "out", Box::into_raw(Box::new(CoBatch { inner: batch })))
    })
}

/// # Safety
/// `batch` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn co_batch_free(batch: *mut CoBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Number of observations in the batch.
///
/// # Safety
/// `batch` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_batch_len(batch: *const CoBatch, out: *mut usize) -> CoStatus {
    guard(|| write_out(out, "out", deref(batch, "batch")?.inner.n))
}

/// Runs the estimator with the noise level `sigma` when `sigma_known`,
/// otherwise with the noise level estimated from the batch.
///
/// # Safety
/// `batch` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_estimate(
    batch: *const CoBatch,
    sigma_known: bool,
    sigma: f64,
    out: *mut *mut CoReport,
) -> CoStatus {
    guard(|| {
        let b = &deref(batch, "batch")?.inner;
        let report = if sigma_known {
            estimate_with_sigma(b, sigma)?
        } else {
            estimate_unknown_sigma(b)?
        };
        write_out(out, "out", Box::into_raw(Box::new(CoReport { inner: report })))
    })
}

/// # Safety
/// `report` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn co_report_free(report: *mut CoReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// New cloud handle holding the estimate; free it with [`co_cloud_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_report_cloud(report: *const CoReport, out: *mut *mut CoCloud) -> CoStatus {
    guard(|| {
        let r = deref(report, "report")?;
        let cloud = r.inner.cloud_estimate.clone();
        write_out(out, "out", Box::into_raw(Box::new(CoCloud { inner: cloud })))
    })
}

/// Noise level used by the estimator (given or estimated).
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_report_sigma(report: *const CoReport, out: *mut f64) -> CoStatus {
    guard(|| write_out(out, "out", deref(report, "report")?.inner.sigma_used))
}

/// `λ_d − λ_{d+1}` of the Gram mean.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_report_eigengap(report: *const CoReport, out: *mut f64) -> CoStatus {
    guard(|| write_out(out, "out", deref(report, "report")?.inner.eigengap))
}

unsafe fn write_bound(
    report: Result<BoundReport, Error>,
    value: *mut f64,
    applicable: *mut bool,
) -> Result<(), Failure> {
    let r = report?;
    write_out(applicable, "applicable", r.applicable)?;
    write_out(value, "value", r.value.unwrap_or(f64::NAN))
}

/// Gram-inversion bound on `ρ` given `σ_d` and `‖G − G̃‖_F`. Writes NaN and
/// `applicable = false` outside `gap ≤ σ_d²/2`.
///
/// # Safety
/// `value` and `applicable` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn co_gram_inversion_bound(
    sigma_d: f64,
    gram_gap: f64,
    value: *mut f64,
    applicable: *mut bool,
) -> CoStatus {
    guard(|| write_bound(gram_inversion_bound(sigma_d, gram_gap), value, applicable))
}

/// `L‖G − G̃‖_F / σ_d` with `L = 1/√(2(√2−1))`.
///
/// # Safety
/// `value` and `applicable` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn co_tu_lipschitz_bound(
    sigma_d: f64,
    gram_gap: f64,
    value: *mut f64,
    applicable: *mut bool,
) -> CoStatus {
    guard(|| write_bound(tu_lipschitz_bound(sigma_d, gram_gap), value, applicable))
}

/// `(9/4)‖X1‖_op ρ`, applicable when `ρ ≤ ‖X1‖_op/4`.
///
/// # Safety
/// `value` and `applicable` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn co_gram_diff_bound(
    opnorm_x1: f64,
    rho: f64,
    value: *mut f64,
    applicable: *mut bool,
) -> CoStatus {
    guard(|| write_bound(gram_diff_upper_bound(opnorm_x1, rho), value, applicable))
}

/// High-probability bound on `‖G̃_N − G‖_F`.
///
/// # Safety
/// `value` and `applicable` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn co_concentration_bound(
    d: usize,
    k: usize,
    n: usize,
    sigma: f64,
    opnorm_x: f64,
    delta: f64,
    value: *mut f64,
    applicable: *mut bool,
) -> CoStatus {
    guard(|| {
        write_bound(
            concentration_bound(d, k, n, sigma, opnorm_x, delta),
            value,
            applicable,
        )
    })
}

/// `(k+1)σ²/N · (kσ²d + ‖X‖²)`.
#[no_mangle]
pub extern "C" fn co_expected_gram_mse(d: usize, k: usize, n: usize, sigma: f64, frob2_x: f64) -> f64 {
    expected_gram_mse(d, k, n, sigma, frob2_x)
}

/// `σ²dk/N`.
#[no_mangle]
pub extern "C" fn co_oracle_mle_mse(d: usize, k: usize, n: usize, sigma: f64) -> f64 {
    oracle_mle_mse(d, k, n, sigma)
}

/// `Φ(−‖X‖/σ)`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_sign_test_error(norm_x: f64, sigma: f64, out: *mut f64) -> CoStatus {
    guard(|| write_out(out, "out", sign_test_error(norm_x, sigma)?))
}

/// `12(2d)^l ρ²` for `l ≥ 2`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn co_delta_l_bound(d: usize, l: u32, rho: f64, out: *mut f64) -> CoStatus {
    guard(|| write_out(out, "out", delta_l_bound(d, l, rho)?))
}
