#ifndef CENSIM_H
#define CENSIM_H

/* Generated by cbindgen from censim-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum CensimStatus {
  CensimStatus_Ok = 0,
  // A pointer argument was null or a scalar argument out of range.
  CensimStatus_InvalidArgument = 1,
  // The input data failed validation.
  CensimStatus_DataError = 2,
  // Estimation failed (empty criterion, singular information, ...).
  CensimStatus_FitError = 3,
  // The provided buffer is too small; query the required length first.
  CensimStatus_BufferTooSmall = 4,
} CensimStatus;

// Opaque censored dataset handle.
typedef struct CensimDataset CensimDataset;

// Opaque fit-result handle.
typedef struct CensimFit CensimFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent error on this thread. The pointer stays valid
// until the next failing call on the same thread; never free it.
const char *censim_last_error(void);

// Builds a dataset from parallel arrays: `times[i]`, `events[i]` (0 or 1)
// and the row-major `n` × `dim` covariate matrix.
//
// # Safety
// `times` and `events` must point to `n` readable elements, `covariates` to
// `n * dim` readable elements, and `out` must be a valid writable pointer.
enum CensimStatus censim_dataset_new(const double *times,
                                     const uint8_t *events,
                                     const double *covariates,
                                     size_t n,
                                     size_t dim,
                                     struct CensimDataset **out);

// Releases a dataset handle; a null pointer is a no-op.
//
// # Safety
// `dataset` must be null or a pointer returned by `censim_dataset_new` that
// has not been freed yet.
void censim_dataset_free(struct CensimDataset *dataset);

// Number of observations in the dataset; zero for a null handle.
//
// # Safety
// `dataset` must be null or a live dataset handle.
size_t censim_dataset_len(const struct CensimDataset *dataset);

// Fits the index direction. `method` is 0 for weighted least squares, 1 for
// synthetic data.
//
// # Safety
// `dataset` must be a live dataset handle and `out` a valid writable
// pointer.
enum CensimStatus censim_fit(const struct CensimDataset *dataset,
                             int32_t method,
                             double bandwidth_constant,
                             double trim_fraction,
                             uint64_t seed,
                             struct CensimFit **out);

// Releases a fit handle; a null pointer is a no-op.
//
// # Safety
// `fit` must be null or a pointer returned by `censim_fit` that has not
// been freed yet.
void censim_fit_free(struct CensimFit *fit);

// Dimension d of the fitted direction (including the pinned coordinate).
//
// # Safety
// `fit` must be null or a live fit handle.
size_t censim_fit_dim(const struct CensimFit *fit);

// Copies the fitted direction (first coordinate always one) into `buf`.
//
// # Safety
// `fit` must be a live fit handle and `buf` writable for `len` elements.
enum CensimStatus censim_fit_theta(const struct CensimFit *fit, double *buf, size_t len);

// Copies the d-1 Wald standard errors of the free coordinates into `buf`.
//
// # Safety
// `fit` must be a live fit handle and `buf` writable for `len` elements.
enum CensimStatus censim_fit_standard_errors(const struct CensimFit *fit, double *buf, size_t len);

// Criterion value at the fitted direction; NaN for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
double censim_fit_criterion(const struct CensimFit *fit);

// Whether the simplex search met its tolerances.
//
// # Safety
// `fit` must be null or a live fit handle.
bool censim_fit_converged(const struct CensimFit *fit);

// Fraction of censored observations in the fitted sample; NaN for null.
//
// # Safety
// `fit` must be null or a live fit handle.
double censim_fit_censoring_fraction(const struct CensimFit *fit);

// Fraction of observations removed by trimming; NaN for null.
//
// # Safety
// `fit` must be null or a live fit handle.
double censim_fit_trimmed_fraction(const struct CensimFit *fit);

// Bandwidth used at the fitted direction; NaN for null.
//
// # Safety
// `fit` must be null or a live fit handle.
double censim_fit_bandwidth(const struct CensimFit *fit);

// Product-limit curve for the event (`target` = 0) or censoring
// (`target` = 1) distribution. Jump times and cumulative values are written
// to `times_out`/`cdf_out` when `capacity` suffices; `written` always
// receives the number of jumps. Call with `capacity` = 0 and null buffers to
// query the length.
//
// # Safety
// `dataset` must be a live dataset handle, `written` a valid writable
// pointer, and the buffers writable for `capacity` elements when non-null.
enum CensimStatus censim_km(const struct CensimDataset *dataset,
                            int32_t target,
                            double *times_out,
                            double *cdf_out,
                            size_t capacity,
                            size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CENSIM_H */
