#ifndef COSMIX_H
#define COSMIX_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Outcome of a call.
typedef enum CosmixStatus {
  COSMIX_STATUS_OK = 0,
  COSMIX_STATUS_NULL_POINTER = 1,
  COSMIX_STATUS_INVALID_ARGUMENT = 2,
  COSMIX_STATUS_IO = 3,
  COSMIX_STATUS_PARSE = 4,
  COSMIX_STATUS_MISMATCH = 5,
  // Empty selections, single-document corpora and similar data problems.
  COSMIX_STATUS_DATA = 6,
  COSMIX_STATUS_TOO_CONCENTRATED = 7,
  COSMIX_STATUS_NO_FINITE_ROOT = 8,
  COSMIX_STATUS_COMPONENT_COLLAPSE = 9,
  // Other numerical failures.
  COSMIX_STATUS_NUMERICAL = 10,
  COSMIX_STATUS_PANIC = 11,
} CosmixStatus;

// Term weighting of a matrix built from memory.
typedef enum CosmixWeighting {
  COSMIX_WEIGHTING_RAW_COUNT = 0,
  COSMIX_WEIGHTING_IDF_WEIGHTED = 1,
} CosmixWeighting;

typedef struct CosmixMatrix CosmixMatrix;

typedef struct CosmixModel CosmixModel;

typedef struct CosmixResult CosmixResult;

// Options of [`cosmix_fit_em`]. Start from [`cosmix_fit_options_default`].
typedef struct CosmixFitOptions {
  // Target rate of documents not allocated to their nearest centroid.
  double alpha;
  // Fixed lambda; zero or negative re-solves it at every iteration.
  double lambda;
  size_t n_runs;
  uint64_t seed;
  size_t max_iter;
  double tol;
} CosmixFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *cosmix_last_error(void);

// Library version as a static string.
const char *cosmix_version(void);

// Cosine distance of two vectors of length `len`, clamped to [0, 1].
//
// # Safety
// `x` and `y` must point to `len` doubles; `out` must be writable.
enum CosmixStatus cosmix_cosine_distance(const double *x,
                                         const double *y,
                                         size_t len,
                                         double *out_d);

// Solve the calibration equation for lambda from an `n` x `k` row-major
// distance matrix and `k` component weights.
//
// # Safety
// `distances` must hold `n * k` doubles, `weights` `k` doubles.
enum CosmixStatus cosmix_solve_lambda(const double *distances,
                                      size_t n,
                                      size_t k,
                                      const double *weights,
                                      double alpha,
                                      double *out_lambda);

// Read a matrix file written by the `cosmix` tools.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CosmixStatus cosmix_matrix_read(const char *path, struct CosmixMatrix **out_m);

// Build a matrix from `n_docs` x `n_terms` row-major values. Terms are named `t0`, `t1`, ...
//
// # Safety
// `values` must hold `n_docs * n_terms` doubles; `out` must be writable.
enum CosmixStatus cosmix_matrix_from_dense(const double *values,
                                           size_t n_docs,
                                           size_t n_terms,
                                           enum CosmixWeighting weighting,
                                           struct CosmixMatrix **out_m);

// # Safety
// `m` must be a live matrix handle.
size_t cosmix_matrix_n_docs(const struct CosmixMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t cosmix_matrix_n_terms(const struct CosmixMatrix *m);

// # Safety
// `m` must come from a `cosmix_matrix_*` constructor and not be used afterwards.
void cosmix_matrix_free(struct CosmixMatrix *m);

struct CosmixFitOptions cosmix_fit_options_default(void);

// Fit a `k`-component mixture by EM from seeded k-means starts.
//
// # Safety
// `m` must be a live matrix handle; `opts` readable; the out pointers writable.
enum CosmixStatus cosmix_fit_em(const struct CosmixMatrix *m,
                                size_t k,
                                const struct CosmixFitOptions *opts,
                                struct CosmixModel **out_model,
                                struct CosmixResult **out_result);

// Posteriors and labels of `m` under a fitted model, without refitting.
//
// # Safety
// Handles must be live; `out` writable.
enum CosmixStatus cosmix_classify(const struct CosmixModel *model,
                                  const struct CosmixMatrix *m,
                                  struct CosmixResult **out_result);

// # Safety
// `path` must be a nul-terminated string; `out` writable.
enum CosmixStatus cosmix_model_load(const char *path, struct CosmixModel **out_model);

// # Safety
// `model` must be live; `path` a nul-terminated string.
enum CosmixStatus cosmix_model_save(const struct CosmixModel *model, const char *path);

// # Safety
// `model` must be live.
size_t cosmix_model_k(const struct CosmixModel *model);

// # Safety
// `model` must be live.
double cosmix_model_lambda(const struct CosmixModel *model);

// Copy the k mixing weights into `buf` (capacity `cap`); `needed` gets k.
// A null `buf` only reports the length.
//
// # Safety
// `model` must be live; `buf` must hold `cap` doubles.
enum CosmixStatus cosmix_model_weights(const struct CosmixModel *model,
                                       double *buf,
                                       size_t cap,
                                       size_t *needed);

// # Safety
// `model` must come from this library and not be used afterwards.
void cosmix_model_free(struct CosmixModel *model);

// # Safety
// `r` must be live.
size_t cosmix_result_n_docs(const struct CosmixResult *r);

// # Safety
// `r` must be live.
size_t cosmix_result_k(const struct CosmixResult *r);

// # Safety
// `r` must be live.
double cosmix_result_partial_loglik(const struct CosmixResult *r);

// # Safety
// `r` must be live.
size_t cosmix_result_n_iterations(const struct CosmixResult *r);

// # Safety
// `r` must be live.
bool cosmix_result_converged(const struct CosmixResult *r);

// Hard labels, one per document.
//
// # Safety
// `r` must be live; `buf` must hold `cap` values.
enum CosmixStatus cosmix_result_labels(const struct CosmixResult *r,
                                       size_t *buf,
                                       size_t cap,
                                       size_t *needed);

// Posteriors, `n_docs` x `k` row-major.
//
// # Safety
// `r` must be live; `buf` must hold `cap` doubles.
enum CosmixStatus cosmix_result_posteriors(const struct CosmixResult *r,
                                           double *buf,
                                           size_t cap,
                                           size_t *needed);

// # Safety
// `r` must come from this library and not be used afterwards.
void cosmix_result_free(struct CosmixResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COSMIX_H */
