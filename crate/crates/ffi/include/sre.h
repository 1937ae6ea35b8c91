#ifndef SRE_H
#define SRE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum SreStatus {
  SRE_STATUS_OK = 0,
  SRE_STATUS_NULL_POINTER = 1,
  SRE_STATUS_INVALID_ARGUMENT = 2,
  SRE_STATUS_DIMENSION_MISMATCH = 3,
  SRE_STATUS_NON_FINITE = 4,
  SRE_STATUS_SINGULAR = 5,
  SRE_STATUS_WEAK_INSTRUMENT = 6,
  SRE_STATUS_SIMULATION = 7,
  SRE_STATUS_CONFIG = 8,
  SRE_STATUS_IO = 9,
  /**
   * A Rust panic was caught at the boundary.
   */
  SRE_STATUS_PANIC = 10,
  /**
   * Anything else the core library reports; see the message.
   */
  SRE_STATUS_OTHER = 11,
} SreStatus;

/**
 * Private value law for [`sre_equilibrium_bid`].
 */
typedef enum SreValueDist {
  SRE_VALUE_DIST_UNIFORM = 0,
  /**
   * Beta with the integer shapes passed alongside.
   */
  SRE_VALUE_DIST_BETA = 1,
} SreValueDist;

/**
 * Opaque Monte Carlo report.
 */
typedef struct SreReport SreReport;

/**
 * One row of a report's summary.
 */
typedef struct SreAggregate {
  /**
   * 0 statistical, 1 structural, 2 sre, 3 sre-crossfit.
   */
  uint32_t estimator;
  /**
   * 0 in-domain, 1 out-of-domain.
   */
  uint32_t domain;
  double bias;
  double variance;
  double mse;
  uint64_t trials;
} SreAggregate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. Valid until the next call on the same thread.
 */
const char *sre_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sre_version(void);

/**
 * Ridge toward a target: minimizes `‖y − Xθ‖² + λ Σ w_j (θ_j − θ^M_j)²`.
 * `x` is `n × p`; `theta_m`, `weights` and `out_theta` have length `p`.
 *
 * # Safety
 * Every pointer must reference the stated number of values.
 */
enum SreStatus sre_ridge(size_t n,
                         size_t p,
                         const double *x,
                         const double *y,
                         const double *theta_m,
                         const double *weights,
                         double lambda,
                         double *out_theta);

/**
 * Penalized linear GMM with moments `Z'(y − Xθ)` and weight `W`: `x` is
 * `n × p`, `z` is `n × l`, `w` is `l × l`.
 *
 * # Safety
 * Every pointer must reference the stated number of values.
 */
enum SreStatus sre_gmm(size_t n,
                       size_t p,
                       size_t l,
                       const double *x,
                       const double *z,
                       const double *y,
                       const double *w,
                       const double *theta_m,
                       const double *weights,
                       double lambda,
                       double *out_theta);

/**
 * Symmetric equilibrium bid of a first-price auction with `n` bidders at
 * value `v`. `beta_a`, `beta_b` are ignored for the uniform law.
 *
 * # Safety
 * `out_bid` must be writable.
 */
enum SreStatus sre_equilibrium_bid(double v,
                                   uint32_t n,
                                   enum SreValueDist dist,
                                   uint32_t beta_a,
                                   uint32_t beta_b,
                                   double *out_bid);

/**
 * Bias, variance and MSE of `trials` prediction curves over `points`
 * evaluation points. `predictions` is `trials × points`; `truth` has
 * length `points`.
 *
 * # Safety
 * Every pointer must reference the stated number of values.
 */
enum SreStatus sre_metrics(size_t trials,
                           size_t points,
                           const double *truth,
                           const double *predictions,
                           double *out_bias,
                           double *out_variance,
                           double *out_mse);

/**
 * Runs the Monte Carlo experiment described by a TOML config. On success
 * `*out_report` owns a new report.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out_report` writable.
 */
enum SreStatus sre_run(const char *config_toml, struct SreReport **out_report);

/**
 * Number of summary rows in a report.
 *
 * # Safety
 * `report` must come from [`sre_run`] and `out_count` be writable.
 */
enum SreStatus sre_report_aggregate_count(const struct SreReport *report, size_t *out_count);

/**
 * Summary row `index` of a report.
 *
 * # Safety
 * `report` must come from [`sre_run`] and `out` be writable.
 */
enum SreStatus sre_report_aggregate(const struct SreReport *report,
                                    size_t index,
                                    struct SreAggregate *out);

/**
 * Writes summary.csv, curves.csv, config.snapshot and report.json into
 * `out_dir`.
 *
 * # Safety
 * `report` must come from [`sre_run`]; `out_dir` must be NUL-terminated.
 */
enum SreStatus sre_report_write(const struct SreReport *report, const char *out_dir);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must come from [`sre_run`] and not be used afterwards.
 */
void sre_report_free(struct SreReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRE_H */
