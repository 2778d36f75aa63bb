#ifndef NGMRES_H
#define NGMRES_H

#include <stddef.h>
#include <stdint.h>

// Return code of every fallible call.
typedef enum NgmresStatus {
  NGMRES_STATUS_OK = 0,
  NGMRES_STATUS_NULL_POINTER = 1,
  NGMRES_STATUS_INVALID_ARGUMENT = 2,
  NGMRES_STATUS_INVALID_PROBLEM = 3,
  NGMRES_STATUS_INVALID_CONFIG = 4,
  NGMRES_STATUS_DIMENSION_MISMATCH = 5,
  NGMRES_STATUS_NUMERICAL_FAILURE = 6,
  NGMRES_STATUS_NOT_DESCENT_DIRECTION = 7,
  NGMRES_STATUS_PANIC = 8,
} NgmresStatus;

typedef enum NgmresProblemTag {
  NGMRES_PROBLEM_TAG_A = 0,
  NGMRES_PROBLEM_TAG_B = 1,
  NGMRES_PROBLEM_TAG_C = 2,
  NGMRES_PROBLEM_TAG_D = 3,
  NGMRES_PROBLEM_TAG_E = 4,
  NGMRES_PROBLEM_TAG_F = 5,
  NGMRES_PROBLEM_TAG_G = 6,
} NgmresProblemTag;

typedef enum NgmresMethod {
  // N-GMRES with the line-searched steepest-descent preconditioner.
  NGMRES_METHOD_NGMRES_SDLS = 0,
  // N-GMRES with the fixed-step steepest-descent preconditioner.
  NGMRES_METHOD_NGMRES_SD = 1,
  NGMRES_METHOD_NCG = 2,
  NGMRES_METHOD_LBFGS = 3,
  // Stand-alone steepest descent with line search.
  NGMRES_METHOD_SDLS = 4,
} NgmresMethod;

typedef enum NgmresSolveStatus {
  NGMRES_SOLVE_STATUS_GRAD_TOL = 0,
  NGMRES_SOLVE_STATUS_FVAL_TOL = 1,
  NGMRES_SOLVE_STATUS_MAX_ITERS = 2,
  NGMRES_SOLVE_STATUS_STALLED = 3,
  NGMRES_SOLVE_STATUS_FAILED = 4,
} NgmresSolveStatus;

typedef enum NgmresStepKind {
  NGMRES_STEP_KIND_INITIAL = 0,
  NGMRES_STEP_KIND_PRECONDITION = 1,
  NGMRES_STEP_KIND_ACCELERATED = 2,
  NGMRES_STEP_KIND_RESTART = 3,
  NGMRES_STEP_KIND_DESCENT = 4,
} NgmresStepKind;

// Opaque objective handle.
typedef struct NgmresProblem NgmresProblem;

// Opaque solver output.
typedef struct NgmresResult NgmresResult;

// `f(x)` with the gradient written to `grad`; both arrays have length `n`.
typedef double (*NgmresObjectiveFn)(const double *x, double *grad, size_t n, void *user_data);

// Solver settings. Obtain defaults from [`ngmres_config_default`].
typedef struct NgmresConfig {
  size_t window_w;
  size_t max_iters;
  double grad_tol;
  // When nonzero, also stop once `|f - f_star| < fval_tol`.
  uint8_t use_fval_target;
  double f_star;
  double fval_tol;
  double c1;
  double c2;
  double initial_step;
  size_t max_ls_evals;
  // When nonzero, use the strong curvature condition.
  uint8_t strong_wolfe;
  // Step bound of the fixed-step preconditioner.
  double delta;
  size_t lbfgs_memory;
} NgmresConfig;

typedef struct NgmresIterationRecord {
  size_t iter_index;
  uint64_t fg_evals_cumulative;
  double f_value;
  double grad_norm_2;
  double grad_norm_inf;
  enum NgmresStepKind step_kind;
} NgmresIterationRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t ngmres_last_error(char *buf, size_t len);

// Creates a built-in benchmark problem. `seed` is used by problem C only.
//
// # Safety
// `out` must be valid for a pointer write.
enum NgmresStatus ngmres_problem_new(enum NgmresProblemTag tag,
                                     size_t n,
                                     uint64_t seed,
                                     struct NgmresProblem **out);

// Wraps a caller-supplied objective of dimension `n`.
//
// # Safety
// `f` must be safe to call with arrays of length `n` and `user_data` for as
// long as the problem handle lives. `out` must be valid for a pointer write.
enum NgmresStatus ngmres_problem_from_callback(size_t n,
                                               NgmresObjectiveFn f,
                                               void *user_data,
                                               struct NgmresProblem **out);

// # Safety
// `problem` must be null or a handle from this library not yet freed.
void ngmres_problem_free(struct NgmresProblem *problem);

// Dimension of `problem`, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t ngmres_problem_dim(const struct NgmresProblem *problem);

// Evaluates `f(x)` into `f_out` and `∇f(x)` into `grad_out` (length `n`).
//
// # Safety
// `x` and `grad_out` must be valid for `n` doubles, `f_out` for one.
enum NgmresStatus ngmres_problem_eval(const struct NgmresProblem *problem,
                                      const double *x,
                                      size_t n,
                                      double *f_out,
                                      double *grad_out);

struct NgmresConfig ngmres_config_default(void);

// Minimizes `problem` from `x0` (length `n`). `config` may be null for
// defaults. On success `*out` receives a result handle, also when the run
// itself ended with [`NgmresSolveStatus::Failed`].
//
// # Safety
// `problem` must be a live handle, `x0` valid for `n` doubles, `config` null
// or valid, and `out` valid for a pointer write.
enum NgmresStatus ngmres_solve_problem(const struct NgmresProblem *problem,
                                       enum NgmresMethod method,
                                       const struct NgmresConfig *config,
                                       const double *x0,
                                       size_t n,
                                       struct NgmresResult **out);

// # Safety
// `result` must be null or a handle from this library not yet freed.
void ngmres_result_free(struct NgmresResult *result);

// Length of the solution vector, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ngmres_result_dim(const struct NgmresResult *result);

// Copies the final iterate into `x_out` (length `n`, must equal the dimension).
//
// # Safety
// `result` must be a live handle and `x_out` valid for `n` doubles.
enum NgmresStatus ngmres_result_x(const struct NgmresResult *result, double *x_out, size_t n);

// Final objective value, NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double ngmres_result_f(const struct NgmresResult *result);

// # Safety
// `result` must be a live handle.
enum NgmresStatus ngmres_result_status(const struct NgmresResult *result,
                                       enum NgmresSolveStatus *out);

// Total f/g evaluations, 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
uint64_t ngmres_result_fg_evals(const struct NgmresResult *result);

// Outer iterations performed, 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ngmres_result_iterations(const struct NgmresResult *result);

// Number of history records (initial point included), 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ngmres_result_history_len(const struct NgmresResult *result);

// Copies history record `index` into `out`.
//
// # Safety
// `result` must be a live handle and `out` valid for one record.
enum NgmresStatus ngmres_result_history(const struct NgmresResult *result,
                                        size_t index,
                                        struct NgmresIterationRecord *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NGMRES_H */
