#ifndef CLOUDORBIT_H
#define CLOUDORBIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CoStatus {
  CO_OK = 0,
  CO_ERR_NULL_POINTER = 1,
  CO_ERR_DIMENSION = 2,
  CO_ERR_ARGUMENT = 3,
  CO_ERR_DEGENERACY = 4,
  CO_ERR_NOT_PSD = 5,
  CO_ERR_NUMERICAL = 6,
  CO_ERR_RESOURCE = 7,
  CO_ERR_CONFIG = 8,
  CO_ERR_PARSE = 9,
  CO_ERR_IO = 10,
  CO_ERR_BUFFER_TOO_SMALL = 11,
  CO_ERR_PANIC = 12,
} CoStatus;

/**
 * Batch of noisy, randomly rotated observations of a cloud.
 */
typedef struct CoBatch CoBatch;

/**
 * Ground-truth or estimated point cloud.
 */
typedef struct CoCloud CoCloud;

/**
 * Estimator output.
 */
typedef struct CoReport CoReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf` (truncating to `len` bytes). Returns the full message length
 * excluding the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t co_last_error_message(char *buf, size_t len);

/**
 * Creates a `d × k` cloud from row-major `data` (length `d·k`). The cloud
 * must have rank `d`.
 *
 * # Safety
 * `data` must be valid for `d·k` reads; `out` must be valid for a write.
 */
enum CoStatus co_cloud_new(size_t d, size_t k, const double *data, struct CoCloud **out);

/**
 * Draws a random cloud with i.i.d. standard normal entries, scaled to unit
 * Frobenius norm when `unit_frobenius` is true.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum CoStatus co_cloud_sample(size_t d,
                              size_t k,
                              uint64_t master_seed,
                              uint64_t stream_index,
                              bool unit_frobenius,
                              struct CoCloud **out);

/**
 * # Safety
 * `cloud` must be null or a handle from this library not yet freed.
 */
void co_cloud_free(struct CoCloud *cloud);

/**
 * # Safety
 * `cloud` must be a live handle; `d` and `k` must be valid for writes.
 */
enum CoStatus co_cloud_dims(const struct CoCloud *cloud, size_t *d, size_t *k);

/**
 * Copies the cloud into `buf` in row-major order; `len` must be at least
 * `d·k`.
 *
 * # Safety
 * `cloud` must be a live handle; `buf` must be valid for `len` writes.
 */
enum CoStatus co_cloud_copy_data(const struct CoCloud *cloud, double *buf, size_t len);

/**
 * `min_Q ‖X1 − Q X2‖_F` over the orthogonal group.
 *
 * # Safety
 * `x1` and `x2` must be live handles; `out` must be valid for a write.
 */
enum CoStatus co_procrustes_distance(const struct CoCloud *x1,
                                     const struct CoCloud *x2,
                                     double *out);

/**
 * Procrustes distance divided by `‖X‖_F`.
 *
 * # Safety
 * `x` and `xhat` must be live handles; `out` must be valid for a write.
 */
enum CoStatus co_relative_error(const struct CoCloud *x, const struct CoCloud *xhat, double *out);

/**
 * Draws `n` observations `Q_i X + σ E_i` of `cloud`.
 *
 * # Safety
 * `cloud` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_batch_sample(const struct CoCloud *cloud,
                              double sigma,
                              size_t n,
                              uint64_t master_seed,
                              uint64_t stream_index,
                              struct CoBatch **out);

/**
 * # Safety
 * `batch` must be null or a handle from this library not yet freed.
 */
void co_batch_free(struct CoBatch *batch);

/**
 * Number of observations in the batch.
 *
 * # Safety
 * `batch` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_batch_len(const struct CoBatch *batch, size_t *out);

/**
 * Runs the estimator with the noise level `sigma` when `sigma_known`,
 * otherwise with the noise level estimated from the batch.
 *
 * # Safety
 * `batch` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_estimate(const struct CoBatch *batch,
                          bool sigma_known,
                          double sigma,
                          struct CoReport **out);

/**
 * # Safety
 * `report` must be null or a handle from this library not yet freed.
 */
void co_report_free(struct CoReport *report);

/**
 * New cloud handle holding the estimate; free it with [`co_cloud_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_report_cloud(const struct CoReport *report, struct CoCloud **out);

/**
 * Noise level used by the estimator (given or estimated).
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_report_sigma(const struct CoReport *report, double *out);

/**
 * `λ_d − λ_{d+1}` of the Gram mean.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum CoStatus co_report_eigengap(const struct CoReport *report, double *out);

/**
 * Gram-inversion bound on `ρ` given `σ_d` and `‖G − G̃‖_F`. Writes NaN and
 * `applicable = false` outside `gap ≤ σ_d²/2`.
 *
 * # Safety
 * `value` and `applicable` must be valid for writes.
 */
enum CoStatus co_gram_inversion_bound(double sigma_d,
                                      double gram_gap,
                                      double *value,
                                      bool *applicable);

/**
 * `L‖G − G̃‖_F / σ_d` with `L = 1/√(2(√2−1))`.
 *
 * # Safety
 * `value` and `applicable` must be valid for writes.
 */
enum CoStatus co_tu_lipschitz_bound(double sigma_d,
                                    double gram_gap,
                                    double *value,
                                    bool *applicable);

/**
 * `(9/4)‖X1‖_op ρ`, applicable when `ρ ≤ ‖X1‖_op/4`.
 *
 * # Safety
 * `value` and `applicable` must be valid for writes.
 */
enum CoStatus co_gram_diff_bound(double opnorm_x1, double rho, double *value, bool *applicable);

/**
 * High-probability bound on `‖G̃_N − G‖_F`.
 *
 * # Safety
 * `value` and `applicable` must be valid for writes.
 */
enum CoStatus co_concentration_bound(size_t d,
                                     size_t k,
                                     size_t n,
                                     double sigma,
                                     double opnorm_x,
                                     double delta,
                                     double *value,
                                     bool *applicable);

/**
 * `(k+1)σ²/N · (kσ²d + ‖X‖²)`.
 */
double co_expected_gram_mse(size_t d, size_t k, size_t n, double sigma, double frob2_x);

/**
 * `σ²dk/N`.
 */
double co_oracle_mle_mse(size_t d, size_t k, size_t n, double sigma);

/**
 * `Φ(−‖X‖/σ)`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum CoStatus co_sign_test_error(double norm_x, double sigma, double *out);

/**
 * `12(2d)^l ρ²` for `l ≥ 2`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum CoStatus co_delta_l_bound(size_t d, uint32_t l, double rho, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOUDORBIT_H */
