#ifndef ROBUST_CS_H
#define ROBUST_CS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcsStatus {
  RCS_STATUS_OK = 0,
  RCS_STATUS_INVALID_INPUT = 1,
  RCS_STATUS_IO = 2,
  RCS_STATUS_PARSE = 3,
  // The design finished without meeting the gradient tolerance. The output handle is
  // still written and usable.
  RCS_STATUS_NOT_CONVERGED = 4,
  RCS_STATUS_NULL_POINTER = 5,
  RCS_STATUS_PANIC = 6,
} RcsStatus;

// A finished projection design.
typedef struct RcsDesign RcsDesign;

// Dense `f64` matrix.
typedef struct RcsMatrix RcsMatrix;

// The solver settings exposed over the ABI; everything else keeps its default.
typedef struct RcsSolverConfig {
  size_t max_cg_iterations;
  double grad_tol;
} RcsSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. Valid until the
// next call into this library from the same thread.
const char *rcs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rcs_version(void);

// Copies `rows * cols` row-major values into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` readable doubles; `out` must be writable.
enum RcsStatus rcs_matrix_new(size_t rows, size_t cols, const double *data, struct RcsMatrix **out);

// # Safety
// `m` must come from this library and not be freed already. Null is ignored.
void rcs_matrix_free(struct RcsMatrix *m);

// Rows of `m`, 0 if `m` is null.
//
// # Safety
// `m` must be null or a live handle.
size_t rcs_matrix_rows(const struct RcsMatrix *m);

// Columns of `m`, 0 if `m` is null.
//
// # Safety
// `m` must be null or a live handle.
size_t rcs_matrix_cols(const struct RcsMatrix *m);

// Copies the entries in row-major order into `buf`, which must hold `len ≥ rows * cols`.
//
// # Safety
// `m` must be a live handle and `buf` must point to `len` writable doubles.
enum RcsStatus rcs_matrix_copy(const struct RcsMatrix *m, double *buf, size_t len);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RcsStatus rcs_matrix_read_csv(const char *path, struct RcsMatrix **out);

// # Safety
// `m` must be a live handle and `path` a NUL-terminated string.
enum RcsStatus rcs_matrix_write_csv(const struct RcsMatrix *m, const char *path);

// Mutual coherence of the columns of `d`.
//
// # Safety
// `d` must be a live handle and `out` writable.
enum RcsStatus rcs_mutual_coherence(const struct RcsMatrix *d, double *out);

// Mean magnitude of the normalized Gram off-diagonals at or above `mu_bar`, and how many
// there were.
//
// # Safety
// `d` must be a live handle; `out_value` and `out_count` writable.
enum RcsStatus rcs_average_mutual_coherence(const struct RcsMatrix *d,
                                            double mu_bar,
                                            double *out_value,
                                            size_t *out_count);

// # Safety
// `out` must be writable.
enum RcsStatus rcs_welch_bound(size_t m, size_t l, double *out);

// Gaussian `n × l` dictionary with unit-norm columns.
//
// # Safety
// `out` must be writable.
enum RcsStatus rcs_gen_dictionary(size_t n, size_t l, uint64_t seed, struct RcsMatrix **out);

// Gaussian `m × n` projection, the usual starting point of a design.
//
// # Safety
// `out` must be writable.
enum RcsStatus rcs_random_projection(size_t m, size_t n, uint64_t seed, struct RcsMatrix **out);

struct RcsSolverConfig rcs_solver_config_default(void);

// Minimizes `‖I − ΨᵀΦᵀΦΨ‖² + λ‖Φ‖²` from `phi0`. `cfg` may be null for defaults.
//
// # Safety
// Handles must be live, `cfg` null or readable, `out` writable.
enum RcsStatus rcs_design_mt(const struct RcsMatrix *psi,
                             double lambda,
                             const struct RcsMatrix *phi0,
                             const struct RcsSolverConfig *cfg,
                             struct RcsDesign **out);

// Alternates Gram projections onto the `ξ`-relaxed ETF set with the regularized fit.
//
// # Safety
// Handles must be live, `cfg` null or readable, `out` writable.
enum RcsStatus rcs_design_mt_etf(const struct RcsMatrix *psi,
                                 double lambda,
                                 double xi,
                                 size_t outer_iters,
                                 const struct RcsMatrix *phi0,
                                 const struct RcsSolverConfig *cfg,
                                 struct RcsDesign **out);

// Baseline design penalizing `λ‖ΦE‖²` for a sparse-representation-error matrix `E`.
//
// # Safety
// Handles must be live, `cfg` null or readable, `out` writable.
enum RcsStatus rcs_design_lh(const struct RcsMatrix *psi,
                             double lambda,
                             const struct RcsMatrix *sre,
                             const struct RcsMatrix *phi0,
                             const struct RcsSolverConfig *cfg,
                             struct RcsDesign **out);

// Copies the designed projection into a new matrix handle.
//
// # Safety
// `design` must be a live handle and `out` writable.
enum RcsStatus rcs_design_phi(const struct RcsDesign *design, struct RcsMatrix **out);

// 1 if the design met its gradient tolerance, 0 otherwise or for null.
//
// # Safety
// `design` must be null or a live handle.
int32_t rcs_design_converged(const struct RcsDesign *design);

// Objective value after the last iteration; NaN for null or an empty trace.
//
// # Safety
// `design` must be null or a live handle.
double rcs_design_final_objective(const struct RcsDesign *design);

// # Safety
// `design` must come from this library and not be freed already. Null is ignored.
void rcs_design_free(struct RcsDesign *design);

// OMP with at most `k` atoms of `d` for the measurement `y` (length `rows(d)`). Writes the
// dense coefficient vector, `cols(d)` values, into `coeffs`.
//
// # Safety
// `d` must be a live handle, `y` readable for `y_len` doubles, `coeffs` writable for
// `coeffs_len` doubles.
enum RcsStatus rcs_omp(const struct RcsMatrix *d,
                       const double *y,
                       size_t y_len,
                       size_t k,
                       double *coeffs,
                       size_t coeffs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_CS_H */
