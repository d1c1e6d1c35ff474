#ifndef PHASEDIV_H
#define PHASEDIV_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdMethod {
  PD_METHOD_SD = 0,
  PD_METHOD_NCG = 1,
  PD_METHOD_LBFGS = 2,
  PD_METHOD_TN = 3,
  PD_METHOD_MISELL = 4,
} PdMethod;

/**
 * Result of every fallible call.
 */
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_ARGUMENT = 2,
  PD_STATUS_SHAPE_MISMATCH = 3,
  PD_STATUS_DOMAIN = 4,
  PD_STATUS_CONFIG = 5,
  PD_STATUS_TOO_LARGE = 6,
  PD_STATUS_FORMAT = 7,
  PD_STATUS_IO = 8,
  PD_STATUS_BUFFER_TOO_SMALL = 9,
  PD_STATUS_PANIC = 10,
} PdStatus;

typedef enum PdModel {
  PD_MODEL_MLP = 0,
  PD_MODEL_LS = 1,
  PD_MODEL_LSI = 2,
} PdModel;

typedef enum PdStopReason {
  PD_STOP_REASON_MAX_ITERS = 0,
  PD_STOP_REASON_TOL_FUN = 1,
  PD_STOP_REASON_TOL_X = 2,
  PD_STOP_REASON_GRAD_ZERO = 3,
  PD_STOP_REASON_LINE_SEARCH_FAIL = 4,
} PdStopReason;

/**
 * Synthetic problem: pupil, truth, diversity plan and data.
 */
typedef struct PdInstance PdInstance;

/**
 * Misfit functional bound to an instance's data.
 */
typedef struct PdObjective PdObjective;

/**
 * Outcome of a solver run.
 */
typedef struct PdSolution PdSolution;

/**
 * Solver settings; obtain defaults from [`pd_solver_options_default`].
 */
typedef struct PdSolverOptions {
  enum PdMethod method;
  size_t max_iters;
  double tol_fun;
  double tol_x;
  double c1;
  double c2;
  double ncg_c2;
  size_t lbfgs_memory;
  /**
   * 0 selects twice the pixel count.
   */
  size_t tn_cg_max;
} PdSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pd_version(void);

/**
 * Copies the last error message of this thread into `buf` and returns the
 * size needed (including the terminator); 1 when there was no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pd_last_error(char *buf, size_t len);

struct PdSolverOptions pd_solver_options_default(void);

/**
 * Generates an instance from experiment config text (TOML, may be empty
 * for the defaults).
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
enum PdStatus pd_instance_generate(const char *config_toml, struct PdInstance **out);

/**
 * Loads an instance directory written by the CLI or [`pd_instance_save`].
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum PdStatus pd_instance_load(const char *dir, struct PdInstance **out);

/**
 * # Safety
 * `instance` must be a live handle and `dir` a NUL-terminated string.
 */
enum PdStatus pd_instance_save(const struct PdInstance *instance, const char *dir);

/**
 * # Safety
 * `instance` must be null or a handle from this library not yet freed.
 */
void pd_instance_free(struct PdInstance *instance);

/**
 * Grid side `n`; 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
size_t pd_instance_grid_size(const struct PdInstance *instance);

/**
 * Number of measurement planes; 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
size_t pd_instance_plane_count(const struct PdInstance *instance);

/**
 * Ground truth as `2 n²` interleaved doubles.
 *
 * # Safety
 * `instance` must be a live handle; `out` must hold `len` doubles.
 */
enum PdStatus pd_instance_truth(const struct PdInstance *instance, double *out, size_t len);

/**
 * Measured intensity of plane `plane` as `n²` doubles.
 *
 * # Safety
 * `instance` must be a live handle; `out` must hold `len` doubles.
 */
enum PdStatus pd_instance_intensity(const struct PdInstance *instance,
                                    size_t plane,
                                    double *out,
                                    size_t len);

/**
 * Unit-amplitude random-phase start on the pupil.
 *
 * # Safety
 * `instance` must be a live handle; `out` must hold `len` doubles.
 */
enum PdStatus pd_instance_random_start(const struct PdInstance *instance,
                                       uint64_t seed,
                                       double *out,
                                       size_t len);

/**
 * # Safety
 * `instance` must be a live handle; `out` must be writable. The objective
 * copies what it needs and does not borrow the instance.
 */
enum PdStatus pd_objective_new(const struct PdInstance *instance,
                               enum PdModel model,
                               double epsilon,
                               struct PdObjective **out);

/**
 * # Safety
 * `objective` must be null or a handle not yet freed.
 */
void pd_objective_free(struct PdObjective *objective);

/**
 * Objective value and Wirtinger gradient `∂f/∂z̄` at `z`. `gradient` may be
 * null when only the value is wanted.
 *
 * # Safety
 * `z` holds `len` doubles; `gradient`, when not null, holds `len` doubles.
 */
enum PdStatus pd_objective_evaluate(const struct PdObjective *objective,
                                    const double *z,
                                    size_t len,
                                    double *value,
                                    double *gradient);

/**
 * Hessian-vector product at `z` applied to `h`.
 *
 * # Safety
 * `z`, `h` and `out` each hold `len` doubles.
 */
enum PdStatus pd_objective_hvp(const struct PdObjective *objective,
                               const double *z,
                               const double *h,
                               size_t len,
                               double *out);

/**
 * Forward/adjoint transforms performed by this objective so far.
 *
 * # Safety
 * `objective` must be null or a live handle.
 */
uint64_t pd_objective_fft_calls(const struct PdObjective *objective);

/**
 * Runs a solver from `z0` (`len` doubles). The trace records the aligned
 * RMS against the instance truth.
 *
 * # Safety
 * `objective` and `options` must be valid; `z0` holds `len` doubles.
 */
enum PdStatus pd_solve(const struct PdObjective *objective,
                       const struct PdSolverOptions *options,
                       const double *z0,
                       size_t len,
                       struct PdSolution **out);

/**
 * # Safety
 * `solution` must be null or a handle not yet freed.
 */
void pd_solution_free(struct PdSolution *solution);

/**
 * # Safety
 * `solution` must be a live handle; `out` must hold `len` doubles.
 */
enum PdStatus pd_solution_field(const struct PdSolution *solution, double *out, size_t len);

/**
 * Iterations performed; 0 for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t pd_solution_iterations(const struct PdSolution *solution);

/**
 * FFT calls of the run; 0 for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
uint64_t pd_solution_fft_calls(const struct PdSolution *solution);

/**
 * Final objective value, final aligned RMS and stop reason.
 *
 * # Safety
 * `solution` must be a live handle; outputs must be writable.
 */
enum PdStatus pd_solution_summary(const struct PdSolution *solution,
                                  double *value,
                                  double *rms,
                                  enum PdStopReason *stop);

/**
 * Copies the trace CSV into `buf` and returns the size needed including
 * the terminator (0 for a null handle). Call with a null `buf` to query.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t pd_solution_trace_csv(const struct PdSolution *solution, char *buf, size_t len);

/**
 * Relative error of `estimate` against `truth` after the best global
 * phase alignment; both hold `2 n²` doubles for an `n × n` grid.
 *
 * # Safety
 * `truth` and `estimate` hold `len` doubles; `out` must be writable.
 */
enum PdStatus pd_aligned_rms(const double *truth,
                             const double *estimate,
                             size_t n,
                             size_t len,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASEDIV_H */
