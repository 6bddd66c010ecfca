#ifndef BLA_LAB_H
#define BLA_LAB_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every exported function.
 */
typedef enum BlaStatus {
  BLA_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  BLA_STATUS_NULL_POINTER = 1,
  /*
   Invalid arguments, dimensions or configuration text.
   */
  BLA_STATUS_INVALID_INPUT = 2,
  /*
   Numerical failure (divergence, degenerate design, ...).
   */
  BLA_STATUS_NUMERIC = 3,
  /*
   A Rust panic was caught at the boundary.
   */
  BLA_STATUS_PANIC = 4,
} BlaStatus;

/*
 Spacing of the designed points along the eigen-path.
 */
typedef enum BlaSpacing {
  BLA_SPACING_CELL_CENTERS = 0,
  BLA_SPACING_ENDPOINTS = 1,
} BlaSpacing;

/*
 Robust BLA estimate.
 */
typedef struct BlaEstimate BlaEstimate;

/*
 Fitted rational model.
 */
typedef struct BlaModel BlaModel;

/*
 Realized multisine.
 */
typedef struct BlaSignal BlaSignal;

/*
 Simulatable system loaded from a TOML model description.
 */
typedef struct BlaSystem BlaSystem;

/*
 Experiment region of the central composite design.
 */
typedef struct BlaRegion {
  double dc_min;
  double dc_max;
  double std_min;
  double std_max;
  double dc_c;
  double std_c;
  size_t l_center;
} BlaRegion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread (empty after success).
 The pointer stays valid until the next call on the same thread.
 */
const char *bla_last_error(void);

/*
 Realizes `periods` periods of a random-phase multisine.

 # Safety
 `harmonics` points to `n_harmonics` values; `out` is writable.
 */
enum BlaStatus bla_signal_new(size_t n_samples,
                              double fs,
                              const size_t *harmonics,
                              size_t n_harmonics,
                              double dc,
                              double std,
                              uint64_t seed,
                              size_t periods,
                              struct BlaSignal **out);

/*
 Number of samples (all periods).

 # Safety
 `sig` is a live handle or null.
 */
size_t bla_signal_len(const struct BlaSignal *sig);

/*
 Copies the samples into `buf` (`len` must equal [`bla_signal_len`]).

 # Safety
 `sig` is a live handle; `buf` has room for `len` values.
 */
enum BlaStatus bla_signal_samples(const struct BlaSignal *sig, double *buf, size_t len);

/*
 # Safety
 `sig` is a handle from [`bla_signal_new`] or null; it is not used again.
 */
void bla_signal_free(struct BlaSignal *sig);

/*
 Loads a system from TOML model text (same format as the CLI's model
 files).

 # Safety
 `toml_text` is a NUL-terminated string; `out` is writable.
 */
enum BlaStatus bla_system_from_toml(const char *toml_text, struct BlaSystem **out);

/*
 Steady-state response to `len` samples of a periodic input with period
 `n`. The model's transient periods are dropped, so `y` receives
 `len - transient * n` samples; the count is written to `y_len`.

 # Safety
 `x` has `len` values; `y` has room for `y_cap` values; `y_len` is
 writable.
 */
enum BlaStatus bla_system_simulate(const struct BlaSystem *sys,
                                   const double *x,
                                   size_t len,
                                   size_t n,
                                   double fs,
                                   double *y,
                                   size_t y_cap,
                                   size_t *y_len);

/*
 # Safety
 `sys` is a handle from [`bla_system_from_toml`] or null.
 */
void bla_system_free(struct BlaSystem *sys);

/*
 Robust BLA from time records. `u` and `y` hold `m * p * n_samples`
 values laid out realization-major, then period, then sample.

 # Safety
 `harmonics` has `n_harmonics` values; `u`, `y` have `m * p * n_samples`
 values; `out` is writable.
 */
enum BlaStatus bla_estimate_from_time(size_t n_samples,
                                      double fs,
                                      const size_t *harmonics,
                                      size_t n_harmonics,
                                      size_t m,
                                      size_t p,
                                      const double *u,
                                      const double *y,
                                      struct BlaEstimate **out);

/*
 Number of excited bins.

 # Safety
 `est` is a live handle or null.
 */
size_t bla_estimate_len(const struct BlaEstimate *est);

/*
 Copies the per-bin results; any output pointer may be null to skip it.
 Non-null outputs need [`bla_estimate_len`] entries.

 # Safety
 `est` is a live handle; non-null buffers have room for `len` values.
 */
enum BlaStatus bla_estimate_copy(const struct BlaEstimate *est,
                                 size_t len,
                                 double *freqs,
                                 double *g_re,
                                 double *g_im,
                                 double *var_total,
                                 double *var_noise,
                                 double *var_stoch_nl);

/*
 Band-mean total distortion.

 # Safety
 `est` is a live handle; `mse` is writable.
 */
enum BlaStatus bla_estimate_mse(const struct BlaEstimate *est, double *mse);

/*
 # Safety
 `est` is a handle from [`bla_estimate_from_time`] or null.
 */
void bla_estimate_free(struct BlaEstimate *est);

/*
 Fits `G(s) = B(s)/A(s)` with `deg B = nb`, `deg A = na` to an FRF.
 `weights` may be null for uniform weighting.

 # Safety
 `freqs`, `g_re`, `g_im` (and `weights` when non-null) have `len`
 values; `out` is writable.
 */
enum BlaStatus bla_fit_rational(const double *freqs,
                                const double *g_re,
                                const double *g_im,
                                const double *weights,
                                size_t len,
                                size_t nb,
                                size_t na,
                                struct BlaModel **out);

/*
 Fits an estimate with inverse total-variance weights.

 # Safety
 `est` is a live handle; `out` is writable.
 */
enum BlaStatus bla_fit_estimate(const struct BlaEstimate *est,
                                size_t nb,
                                size_t na,
                                struct BlaModel **out);

/*
 # Safety
 `model` is a live handle or null.
 */
size_t bla_model_pole_count(const struct BlaModel *model);

/*
 # Safety
 `model` is a live handle or null.
 */
size_t bla_model_zero_count(const struct BlaModel *model);

/*
 Copies the poles (rad/s) into `re`/`im`, `len` = [`bla_model_pole_count`].

 # Safety
 `model` is a live handle; buffers have room for `len` values.
 */
enum BlaStatus bla_model_poles(const struct BlaModel *model, double *re, double *im, size_t len);

/*
 Copies the zeros (rad/s) into `re`/`im`, `len` = [`bla_model_zero_count`].

 # Safety
 `model` is a live handle; buffers have room for `len` values.
 */
enum BlaStatus bla_model_zeros(const struct BlaModel *model, double *re, double *im, size_t len);

/*
 Evaluates the model at `f_hz`.

 # Safety
 `model` is a live handle; `re`, `im` are writable.
 */
enum BlaStatus bla_model_response(const struct BlaModel *model,
                                  double f_hz,
                                  double *re,
                                  double *im);

/*
 Weighted RMS residual of the fit and its convergence flag.

 # Safety
 `model` is a live handle; non-null outputs are writable.
 */
enum BlaStatus bla_model_info(const struct BlaModel *model, double *residual, bool *converged);

/*
 # Safety
 `model` is a handle from a fit function or null.
 */
void bla_model_free(struct BlaModel *model);

/*
 Number of rows of the central composite plan for `region`.

 # Safety
 `region` is readable; `rows` is writable.
 */
enum BlaStatus bla_ccd_plan_rows(const struct BlaRegion *region, size_t *rows);

/*
 Copies the plan settings; `dc` and `std` need [`bla_ccd_plan_rows`]
 entries.

 # Safety
 `region` is readable; buffers have room for `len` values.
 */
enum BlaStatus bla_ccd_plan(const struct BlaRegion *region, double *dc, double *std, size_t len);

/*
 Fits the quadratic surface to per-row MSEs of the plan, locates its
 extremum and writes `n_points` designed `(dc, std)` settings along the
 least-varying eigen-direction. `x_star` and `direction` receive two
 normalized coordinates each and may be null.

 # Safety
 `region` is readable; `mses` has `n_rows` values; `dc`, `std` have room
 for `n_points` values; non-null `x_star`, `direction` have room for 2.
 */
enum BlaStatus bla_ccd_eigen_path(const struct BlaRegion *region,
                                  const double *mses,
                                  size_t n_rows,
                                  size_t n_points,
                                  enum BlaSpacing spacing,
                                  double *dc,
                                  double *std,
                                  double *x_star,
                                  double *direction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLA_LAB_H */
