#ifndef CDPM_H
#define CDPM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdpmStatus {
  CDPM_STATUS_OK = 0,
  CDPM_STATUS_NULL_POINTER = 1,
  CDPM_STATUS_INVALID_ARGUMENT = 2,
  CDPM_STATUS_DOMAIN = 3,
  CDPM_STATUS_CONFIG = 4,
  CDPM_STATUS_SINGULAR = 5,
  CDPM_STATUS_CAPABILITY = 6,
  CDPM_STATUS_DIVERGED = 7,
  CDPM_STATUS_USAGE = 8,
  CDPM_STATUS_IO = 9,
  CDPM_STATUS_PANIC = 10,
} CdpmStatus;

/**
 * Final states of a sampler run.
 */
typedef struct CdpmBatch CdpmBatch;

/**
 * A score field bound to the model it was built for.
 */
typedef struct CdpmScore CdpmScore;

/**
 * A diffusion model.
 */
typedef struct CdpmSpec CdpmSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the calling thread's last error message (0 if none).
 */
size_t cdpm_last_error_length(void);

/**
 * Copies the last error message, NUL terminated and truncated to `len - 1`
 * bytes, into `buf`. Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null when `len` is 0.
 */
size_t cdpm_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdpm_version(void);

/**
 * Benchmark model of family `kind` ("OU", "COU", "VE", "VP", "subVP", "CVP", "CsubVP").
 *
 * # Safety
 * `kind` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdpmStatus cdpm_spec_benchmark(const char *kind, size_t dim, struct CdpmSpec **out);

/**
 * Model with explicit parameters: `(theta, sigma)` for OU/COU,
 * `(sigma_min, sigma_max)` for VE, `(beta_min, beta_max)` otherwise.
 *
 * # Safety
 * `kind` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdpmStatus cdpm_spec_new(const char *kind,
                              double p1,
                              double p2,
                              double horizon,
                              size_t dim,
                              struct CdpmSpec **out);

/**
 * # Safety
 * `spec` must come from a `cdpm_spec_*` constructor and not be used afterwards.
 */
void cdpm_spec_free(struct CdpmSpec *spec);

/**
 * Perturbation kernel `X_t | X_0 = x ~ N(mu + f (x - mu), s^2 I)`.
 *
 * # Safety
 * `spec` must be a live handle; `mean_factor` and `cond_std` valid pointers.
 */
enum CdpmStatus cdpm_spec_kernel(const struct CdpmSpec *spec,
                                 double t,
                                 double *mean_factor,
                                 double *cond_std);

/**
 * Prior variance (per coordinate) of the backward process.
 *
 * # Safety
 * `spec` must be a live handle and `variance` a valid pointer.
 */
enum CdpmStatus cdpm_spec_prior_variance(const struct CdpmSpec *spec, double *variance);

/**
 * Exact score of `N(mean, var I)` pushed through `spec`; `var = 0` gives a point mass.
 *
 * # Safety
 * `spec` must be a live handle, `mean` must point to `dim` doubles, `out` valid.
 */
enum CdpmStatus cdpm_score_gaussian(const struct CdpmSpec *spec,
                                    const double *mean,
                                    size_t dim,
                                    double var,
                                    struct CdpmScore **out);

/**
 * Wraps `base` with injected error `epsilon`: mode 0 adds fresh Gaussian
 * noise per evaluation, mode 1 a fixed offset. `base` stays valid.
 *
 * # Safety
 * `base` must be a live handle and `out` a valid pointer.
 */
enum CdpmStatus cdpm_score_noisy(const struct CdpmScore *base,
                                 uint32_t mode,
                                 double epsilon,
                                 uint64_t seed,
                                 struct CdpmScore **out);

/**
 * Evaluates the score at `(t, x)` into `out` (both of length `dim`).
 * Stochastic fields draw from stream `stream` (below 2^55), restarted on every call.
 *
 * # Safety
 * `score` must be a live handle; `x` and `out` must point to `dim` doubles.
 */
enum CdpmStatus cdpm_score_eval(const struct CdpmScore *score,
                                double t,
                                const double *x,
                                size_t dim,
                                uint64_t stream,
                                double *out);

/**
 * # Safety
 * `score` must come from a `cdpm_score_*` constructor and not be used afterwards.
 */
void cdpm_score_free(struct CdpmScore *score);

/**
 * Backward sampling from the prior. `method` 0 is Euler-Maruyama, 1 is
 * predictor-corrector with one corrector step at `snr`.
 *
 * # Safety
 * `score` must be a live handle and `out` a valid pointer.
 */
enum CdpmStatus cdpm_sample(const struct CdpmScore *score,
                            uint32_t method,
                            size_t n_steps,
                            size_t n_paths,
                            uint64_t seed,
                            double snr,
                            struct CdpmBatch **out);

/**
 * Number of paths and dimension of a batch.
 *
 * # Safety
 * `batch` must be a live handle; `n_paths` and `dim` valid pointers.
 */
enum CdpmStatus cdpm_batch_shape(const struct CdpmBatch *batch, size_t *n_paths, size_t *dim);

/**
 * Copies the final states (row-major `n_paths x dim`) into `buf` of length `len`.
 *
 * # Safety
 * `batch` must be a live handle and `buf` must point to `len` doubles.
 */
enum CdpmStatus cdpm_batch_final_states(const struct CdpmBatch *batch, double *buf, size_t len);

/**
 * # Safety
 * `batch` must come from [`cdpm_sample`] and not be used afterwards.
 */
void cdpm_batch_free(struct CdpmBatch *batch);

/**
 * Exact W2 between two `n x dim` point clouds (Sinkhorn above the assignment cap).
 *
 * # Safety
 * `a` and `b` must point to `n * dim` doubles and `out` be valid.
 */
enum CdpmStatus cdpm_w2(const double *a, const double *b, size_t n, size_t dim, double *out);

/**
 * Closed-form W2 between `N(m1, v1 I)` and `N(m2, v2 I)`.
 *
 * # Safety
 * `m1` and `m2` must point to `dim` doubles and `out` be valid.
 */
enum CdpmStatus cdpm_w2_gaussian(const double *m1,
                                 double v1,
                                 const double *m2,
                                 double v2,
                                 size_t dim,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDPM_H */
