#ifndef LSQD_H
#define LSQD_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsqdPreconditioner {
  LSQD_PRECONDITIONER_INCOMPLETE_CHOLESKY = 0,
  LSQD_PRECONDITIONER_JACOBI = 1,
  LSQD_PRECONDITIONER_NONE = 2,
} LsqdPreconditioner;

typedef enum LsqdStatus {
  LSQD_STATUS_OK = 0,
  LSQD_STATUS_NULL_POINTER = 1,
  LSQD_STATUS_INVALID_ARGUMENT = 2,
  LSQD_STATUS_UNKNOWN_PRESET = 3,
  LSQD_STATUS_GEOMETRY = 4,
  LSQD_STATUS_SINGULAR_SYSTEM = 5,
  LSQD_STATUS_DIVERGENCE = 6,
  LSQD_STATUS_OUT_OF_RANGE = 7,
  LSQD_STATUS_PANIC = 8,
} LsqdStatus;

/**
 * Opaque solved case.
 */
typedef struct LsqdSolution LsqdSolution;

typedef struct LsqdOptions {
  /**
   * Seed for random grids and the 1D point cloud.
   */
  uint64_t seed;
  double rel_tol;
  double abs_tol;
  uint64_t max_iters;
  double kappa_max;
  enum LsqdPreconditioner preconditioner;
} LsqdOptions;

/**
 * Summary numbers of a solved case. `linf_error` is NaN when the preset has
 * no exact solution.
 */
typedef struct LsqdStats {
  uint32_t degree;
  uint32_t splits;
  uint64_t num_points;
  uint64_t num_rows;
  uint64_t iterations;
  bool converged;
  double epsilon;
  double residual_inf;
  double linf_error;
  double estimator_global;
  double wall_time;
} LsqdStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on the calling thread. Valid until the next
 * failing call on the same thread; never NULL.
 */
const char *lsqd_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *lsqd_version(void);

/**
 * Defaults used by the command line tool.
 */
struct LsqdOptions lsqd_default_options(void);

size_t lsqd_preset_count(void);

/**
 * Name of preset `index`, or NULL when out of range. The string is static.
 */
const char *lsqd_preset_name(size_t index);

/**
 * `epsilon` for a matrix with eigenvalue bounds `[lambda_min, lambda_max]`
 * so that the stabilized condition number stays below `kappa_max`.
 */
double lsqd_stabilization_epsilon(double lambda_max, double lambda_min, double kappa_max);

/**
 * Solves preset `name` at polynomial degree `degree` after `splits`
 * refinements. `options` may be NULL for the defaults. On success `*out`
 * owns a new solution.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string, `options` NULL or valid,
 * and `out` a valid pointer to writable storage.
 */
enum LsqdStatus lsqd_solve_preset(const char *name,
                                  uint32_t degree,
                                  uint32_t splits,
                                  const struct LsqdOptions *options,
                                  struct LsqdSolution **out);

/**
 * Releases a solution. NULL is ignored.
 *
 * # Safety
 * `sol` must be NULL or a handle from [`lsqd_solve_preset`] not yet freed.
 */
void lsqd_solution_free(struct LsqdSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle and `out` valid for writing.
 */
enum LsqdStatus lsqd_solution_stats(const struct LsqdSolution *sol, struct LsqdStats *out);

/**
 * Number of inside points (unknown expansions). 0 for NULL.
 *
 * # Safety
 * `sol` must be NULL or a live handle.
 */
size_t lsqd_solution_num_points(const struct LsqdSolution *sol);

/**
 * Copies point coordinates and the computed values at them. `xs`, `ys`
 * and `values` must each hold `len` doubles, where `len` is at least
 * [`lsqd_solution_num_points`]; any of them may be NULL to skip it.
 *
 * # Safety
 * Non-NULL buffers must be valid for `len` writes.
 */
enum LsqdStatus lsqd_solution_points(const struct LsqdSolution *sol,
                                     double *xs,
                                     double *ys,
                                     double *values,
                                     size_t len);

/**
 * Evaluates the solution at `(x, y)` (`y` ignored in 1D) with the
 * expansion of the cell that contains it.
 *
 * # Safety
 * `sol` must be a live handle and `out` valid for writing.
 */
enum LsqdStatus lsqd_solution_evaluate(const struct LsqdSolution *sol,
                                       double x,
                                       double y,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSQD_H */
