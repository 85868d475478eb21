#ifndef ELLIPSUM_H
#define ELLIPSUM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum EllipsumStatus {
  ELLIPSUM_STATUS_OK = 0,
  ELLIPSUM_STATUS_NULL_POINTER = 1,
  ELLIPSUM_STATUS_DIMENSION_MISMATCH = 2,
  ELLIPSUM_STATUS_NOT_SYMMETRIC = 3,
  ELLIPSUM_STATUS_NOT_POSITIVE_DEFINITE = 4,
  ELLIPSUM_STATUS_NON_FINITE = 5,
  ELLIPSUM_STATUS_RANK_DEFICIENT = 6,
  ELLIPSUM_STATUS_INVALID_DIRECTION = 7,
  ELLIPSUM_STATUS_INVALID_ARGUMENT = 8,
  ELLIPSUM_STATUS_PARSE = 9,
  ELLIPSUM_STATUS_INFEASIBLE = 10,
  ELLIPSUM_STATUS_NOT_TIME_INVARIANT = 11,
  ELLIPSUM_STATUS_NOT_SETTLED = 12,
  ELLIPSUM_STATUS_DEGENERATE = 13,
  ELLIPSUM_STATUS_PANIC = 14,
} EllipsumStatus;

/*
 Opaque Minkowski sum of ellipsoids.
 */
typedef struct EllipsumSum EllipsumSum;

/*
 Opaque discrete-time linear system with ellipsoidal inputs.
 */
typedef struct EllipsumSystem EllipsumSystem;

/*
 Feasibility certificate of a regularized bound.
 */
typedef struct EllipsumFeasibility {
  bool pd_ok;
  bool support_ok;
  double min_margin;
  double trace_change;
  size_t grid_count;
} EllipsumFeasibility;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length without the NUL.
 */
size_t ellipsum_last_error_message(char *buf, size_t len);

/*
 Builds a sum of `k` ellipsoids in dimension `n`. `shapes` holds `k`
 row-major `n×n` matrices back to back; `centers` holds `k·n` values or
 is null for centered ellipsoids.
 */
enum EllipsumStatus ellipsum_sum_new(size_t n,
                                     size_t k,
                                     const double *shapes,
                                     const double *centers,
                                     struct EllipsumSum **out);

void ellipsum_sum_free(struct EllipsumSum *sum);

/*
 State dimension, or 0 for a null handle.
 */
size_t ellipsum_sum_dim(const struct EllipsumSum *sum);

/*
 Number of terms, or 0 for a null handle.
 */
size_t ellipsum_sum_len(const struct EllipsumSum *sum);

/*
 Support function of the sum in direction `ell` (normalized internally).
 */
enum EllipsumStatus ellipsum_sum_support(const struct EllipsumSum *sum,
                                         const double *ell,
                                         double *out);

/*
 Boundary point of the sum with outward normal `ell`; writes `n` values.
 */
enum EllipsumStatus ellipsum_sum_boundary_point(const struct EllipsumSum *sum,
                                                const double *ell,
                                                double *out_point);

/*
 Minimum-trace outer bound. Writes the `n×n` shape and, when
 `out_center` is non-null, the `n` center values.
 */
enum EllipsumStatus ellipsum_min_trace(const struct EllipsumSum *sum,
                                       double *out_shape,
                                       double *out_center);

/*
 Tangent outer bound at `ell`. `grid_count = 0` uses the default grid.
 `out_point` (optional) receives the tangency point.
 */
enum EllipsumStatus ellipsum_tangent(const struct EllipsumSum *sum,
                                     const double *ell,
                                     size_t grid_count,
                                     double *out_shape,
                                     double *out_point);

/*
 Certifies `base_shape + q0` as an outer bound of the sum on a grid.
 An infeasible regularizer is not an error: inspect `out_report`.
 */
enum EllipsumStatus ellipsum_verify_regularizer(const struct EllipsumSum *sum,
                                                const double *q0,
                                                const double *base_shape,
                                                size_t grid_count,
                                                uint64_t seed,
                                                struct EllipsumFeasibility *out_report);

/*
 Searches for a trace-reducing `Q₀` around `base_shape` (null: the
 minimum-trace bound). Writes `Q₀` (`n×n`) and its certificate.
 */
enum EllipsumStatus ellipsum_refine_q0(const struct EllipsumSum *sum,
                                       const double *base_shape,
                                       size_t grid_count,
                                       uint64_t seed,
                                       double *out_q0,
                                       struct EllipsumFeasibility *out_report);

/*
 Parses a system from NUL-terminated JSON
 (`{"A": ..., "inputs": [{"B": ..., "R": ...}], "horizon": K}`).
 */
enum EllipsumStatus ellipsum_system_from_json(const char *json, struct EllipsumSystem **out);

void ellipsum_system_free(struct EllipsumSystem *sys);

/*
 State dimension, or 0 for a null handle.
 */
size_t ellipsum_system_dim(const struct EllipsumSystem *sys);

/*
 Minimum-trace bound of the states reachable at step `k`; writes `n×n`.
 */
enum EllipsumStatus ellipsum_reach_min_trace(const struct EllipsumSystem *sys,
                                             size_t k,
                                             double *out_shape);

/*
 Settling step of a time-invariant system (see the library docs for the
 exact rule).
 */
enum EllipsumStatus ellipsum_settling_horizon(const struct EllipsumSystem *sys,
                                              double tol,
                                              size_t k_max,
                                              size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELLIPSUM_H */
