#ifndef GBTOPT_H
#define GBTOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum GbtMetric {
  GBT_METRIC_SQUARED_EUCLIDEAN = 0,
  GBT_METRIC_MANHATTAN = 1,
} GbtMetric;

typedef enum GbtMode {
  GBT_MODE_EXPLORE = 0,
  GBT_MODE_PENALTY = 1,
  GBT_MODE_CLUSTER_PENALTY = 2,
} GbtMode;

/**
 * Status codes returned by every fallible function.
 */
typedef enum GbtStatus {
  GBT_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  GBT_ERR_NULL = 1,
  /**
   * An argument was out of range or inconsistent.
   */
  GBT_ERR_INVALID = 2,
  /**
   * A file could not be read or written.
   */
  GBT_ERR_IO = 3,
  /**
   * A model file was malformed or of an unsupported version.
   */
  GBT_ERR_MODEL = 4,
  /**
   * Array lengths did not match the problem dimension.
   */
  GBT_ERR_DIMENSION = 5,
  /**
   * A point lay outside the search domain.
   */
  GBT_ERR_OUT_OF_BOUNDS = 6,
  /**
   * The solver stopped on its time or node limit; results were still written.
   */
  GBT_LIMIT_REACHED = 7,
  /**
   * An internal error was caught at the boundary.
   */
  GBT_ERR_INTERNAL = 8,
} GbtStatus;

/**
 * Opaque handle to a trained tree ensemble.
 */
typedef struct GbtModel GbtModel;

/**
 * Opaque handle to an acquisition problem.
 */
typedef struct GbtProblem GbtProblem;

/**
 * Data and settings that define an acquisition problem.
 */
typedef struct GbtProblemSpec {
  enum GbtMode mode;
  enum GbtMetric metric;
  double kappa;
  /**
   * Exploration limit factor (explore mode).
   */
  double zeta;
  /**
   * k-means centers in cluster-penalty mode; 0 picks ceil(sqrt(n_rows)).
   */
  uintptr_t n_clusters;
  uint64_t seed;
  /**
   * `n_rows * n_features` observations, row-major.
   */
  const double *data_x;
  /**
   * `n_rows` observed values.
   */
  const double *data_y;
  uintptr_t n_rows;
  uintptr_t n_features;
  /**
   * `n_features` lower bounds.
   */
  const double *lower;
  /**
   * `n_features` upper bounds.
   */
  const double *upper;
} GbtProblemSpec;

typedef struct GbtSolverOptions {
  double rel_gap;
  double time_limit;
  uintptr_t lookahead;
  uintptr_t group_size;
  /**
   * 0 means no node limit.
   */
  uint64_t max_nodes;
  uint64_t seed;
} GbtSolverOptions;

typedef struct GbtSolveSummary {
  double upper_bound;
  double lower_bound;
  double rel_gap;
  uint64_t nodes_explored;
  double wall_time;
  /**
   * 0 gap reached, 1 time limit, 2 node limit.
   */
  int32_t termination;
} GbtSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL if none.
 */
const char *gbt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gbt_version(void);

/**
 * Loads a model from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum GbtStatus gbt_model_load(const char *path, struct GbtModel **out);

/**
 * Parses a model from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum GbtStatus gbt_model_from_json(const char *json, struct GbtModel **out);

/**
 * Number of input features of a model, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a handle from this library.
 */
uintptr_t gbt_model_num_features(const struct GbtModel *model);

/**
 * Number of trees of a model, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a handle from this library.
 */
uintptr_t gbt_model_num_trees(const struct GbtModel *model);

/**
 * Ensemble prediction at `x` (`n` values).
 *
 * # Safety
 * `model` must be a handle from this library, `x` must point to `n`
 * doubles and `out` must be a valid pointer.
 */
enum GbtStatus gbt_model_predict(const struct GbtModel *model,
                                 const double *x,
                                 uintptr_t n,
                                 double *out);

/**
 * Releases a model. Problems built from it stay valid.
 *
 * # Safety
 * `model` must be NULL or a handle from this library not yet freed.
 */
void gbt_model_free(struct GbtModel *model);

/**
 * Builds an acquisition problem from a model and observations. The model
 * is copied; it may be freed afterwards.
 *
 * # Safety
 * `model` must be a handle from this library, `spec` must point to a
 * valid spec whose arrays have the stated lengths, and `out` must be valid.
 */
enum GbtStatus gbt_problem_new(const struct GbtModel *model,
                               const struct GbtProblemSpec *spec,
                               struct GbtProblem **out);

/**
 * Problem dimension, or 0 for NULL.
 *
 * # Safety
 * `problem` must be NULL or a handle from this library.
 */
uintptr_t gbt_problem_dim(const struct GbtProblem *problem);

/**
 * Acquisition value at `x`.
 *
 * # Safety
 * `problem` must be a handle from this library, `x` must point to `n`
 * doubles and `out` must be a valid pointer.
 */
enum GbtStatus gbt_problem_evaluate(const struct GbtProblem *problem,
                                    const double *x,
                                    uintptr_t n,
                                    double *out);

/**
 * Default solver options.
 */
struct GbtSolverOptions gbt_solver_options_default(void);

/**
 * Minimizes the acquisition function. Writes the minimizer to `x_out`
 * (`n` doubles) and statistics to `summary`. Returns `GBT_LIMIT_REACHED`
 * when a limit stopped the search; outputs are written in that case too.
 *
 * # Safety
 * `problem` must be a handle from this library; `options` may be NULL for
 * defaults; `x_out` must point to `n` writable doubles; `summary` may be NULL.
 */
enum GbtStatus gbt_problem_solve(const struct GbtProblem *problem,
                                 const struct GbtSolverOptions *options,
                                 double *x_out,
                                 uintptr_t n,
                                 struct GbtSolveSummary *summary);

/**
 * Releases a problem.
 *
 * # Safety
 * `problem` must be NULL or a handle from this library not yet freed.
 */
void gbt_problem_free(struct GbtProblem *problem);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBTOPT_H */
