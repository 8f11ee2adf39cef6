#ifndef GFLOW_H
#define GFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum GflowStatus {
  GFLOW_STATUS_OK = 0,
  GFLOW_STATUS_NULL_POINTER = 1,
  GFLOW_STATUS_INVALID_ARGUMENT = 2,
  GFLOW_STATUS_BUFFER_TOO_SMALL = 3,
  GFLOW_STATUS_NOT_PSD = 4,
  GFLOW_STATUS_SINGULAR = 5,
  GFLOW_STATUS_OUT_OF_RANGE = 6,
  GFLOW_STATUS_MODE_MISMATCH = 7,
  GFLOW_STATUS_NOT_ADMISSIBLE = 8,
  GFLOW_STATUS_INTERNAL = 9,
  GFLOW_STATUS_PANIC = 10,
} GflowStatus;

/**
 * Closed-form evaluator handle (target plus initialization).
 */
typedef struct GflowEvaluator GflowEvaluator;

/**
 * Target matrix handle.
 */
typedef struct GflowTarget GflowTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if the last
 * call succeeded. Valid until the next `gflow_*` call on the same thread.
 */
const char *gflow_last_error_message(void);

/**
 * Builds `Y = Q diag(spectrum) Qᵀ`. `Q` is the identity when `use_seed` is
 * false, otherwise a random orthogonal matrix drawn from `rotation_seed`.
 * The spectrum must be nonnegative and nonincreasing.
 *
 * # Safety
 * `spectrum` must point to `n` doubles; `out` must be a valid pointer.
 */
enum GflowStatus gflow_target_from_spectrum(const double *spectrum,
                                            size_t n,
                                            bool use_seed,
                                            uint64_t rotation_seed,
                                            struct GflowTarget **out);

/**
 * Builds a target from a symmetric PSD `n×n` matrix (column-major).
 *
 * # Safety
 * `data` must point to `n*n` doubles; `out` must be a valid pointer.
 */
enum GflowStatus gflow_target_from_matrix(const double *data, size_t n, struct GflowTarget **out);

/**
 * Dimension `n` of the target, or 0 for a null handle.
 *
 * # Safety
 * `target` must be null or a live handle.
 */
size_t gflow_target_dim(const struct GflowTarget *target);

/**
 * Numerical rank `K` of the target, or 0 for a null handle.
 *
 * # Safety
 * `target` must be null or a live handle.
 */
size_t gflow_target_rank(const struct GflowTarget *target);

/**
 * Writes the eigenvalues of the target, nonincreasing, into `out[0..n]`.
 *
 * # Safety
 * `target` must be a live handle; `out` must point to `len` doubles.
 */
enum GflowStatus gflow_target_eigenvalues(const struct GflowTarget *target,
                                          double *out,
                                          size_t len);

/**
 * # Safety
 * `target` must be null or a handle from `gflow_target_from_*` not yet freed.
 */
void gflow_target_free(struct GflowTarget *target);

/**
 * Creates an evaluator for `U(0) = √α · shape`, where `shape` is an
 * `n×m` column-major matrix and `n` is the target dimension. The evaluator
 * keeps its own reference to the target; the target handle may be freed
 * afterwards.
 *
 * # Safety
 * `target` must be a live handle; `shape` must point to `n*m` doubles;
 * `out` must be a valid pointer.
 */
enum GflowStatus gflow_evaluator_new(const struct GflowTarget *target,
                                     const double *shape,
                                     size_t m,
                                     double alpha,
                                     struct GflowEvaluator **out);

/**
 * Writes `W(t) = U(t)U(t)ᵀ` (column-major `n×n`) into `out`.
 *
 * # Safety
 * `evaluator` must be a live handle; `out` must point to `len` doubles.
 */
enum GflowStatus gflow_evaluator_eval_w(const struct GflowEvaluator *evaluator,
                                        double t,
                                        double *out,
                                        size_t len);

/**
 * Mode value `σ_i(t)` for an initialization aligned with the target's
 * eigenvectors (0-based `index`). Returns `GFLOW_STATUS_MODE_MISMATCH` for
 * other initializations.
 *
 * # Safety
 * `evaluator` must be a live handle; `out` must be a valid pointer.
 */
enum GflowStatus gflow_evaluator_eval_sigma(const struct GflowEvaluator *evaluator,
                                            size_t index,
                                            double t,
                                            double *out);

/**
 * Computes the schedule at tolerance `epsilon`. Interval `k` (1-based) is
 * written to `lower[k-1]`, `upper[k-1]`; the last upper endpoint is
 * `+INFINITY`. `*count` receives `K`, and `*admissible` whether `α` meets
 * the schedule's conditions (intervals are written either way).
 *
 * # Safety
 * `evaluator` must be a live handle; `lower` and `upper` must point to
 * `capacity` doubles; `count` and `admissible` must be valid pointers.
 */
enum GflowStatus gflow_evaluator_schedule(const struct GflowEvaluator *evaluator,
                                          double epsilon,
                                          double *lower,
                                          double *upper,
                                          size_t capacity,
                                          size_t *count,
                                          bool *admissible);

/**
 * # Safety
 * `evaluator` must be null or a handle from [`gflow_evaluator_new`] not yet
 * freed.
 */
void gflow_evaluator_free(struct GflowEvaluator *evaluator);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFLOW_H */
