#ifndef DELAYEXIT_H
#define DELAYEXIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DelayexitCase {
  DELAYEXIT_CASE_TRANS = 0,
  DELAYEXIT_CASE_INVAR = 1,
  DELAYEXIT_CASE_CLASSICAL = 2,
} DelayexitCase;

typedef enum DelayexitStatus {
  DELAYEXIT_STATUS_OK = 0,
  DELAYEXIT_STATUS_NULL_POINTER = 1,
  DELAYEXIT_STATUS_INVALID_INPUT = 2,
  /**
   * The mathematics rules the request out (no exit, uncovered case, ...).
   */
  DELAYEXIT_STATUS_DOMAIN_ERROR = 3,
  DELAYEXIT_STATUS_PANIC = 4,
} DelayexitStatus;

/**
 * Opaque system handle.
 */
typedef struct DelayexitSystem DelayexitSystem;

typedef struct DelayexitCoeffs {
  double x_star;
  double theta_star;
  double alpha;
  double beta;
  double gamma;
  double coef_delta;
  /**
   * NaN when the transcritical point is degenerate.
   */
  double lambda;
  bool s0_invariant;
  bool z0_invariant;
} DelayexitCoeffs;

typedef struct DelayexitPrediction {
  enum DelayexitCase exit_case;
  double x0;
  /**
   * NaN unless `exit_case` is `Invar`.
   */
  double x_tilde;
  double x1;
  double lambda;
  double x_star;
  bool s0_invariant;
  bool z0_invariant;
  /**
   * Bit `k - 1` is set when standing assumption `k` fails.
   */
  uint32_t assumption_failures;
} DelayexitPrediction;

typedef struct DelayexitExit {
  double entry_x;
  double exit_x;
  double entry_t;
  double exit_t;
  /**
   * The trajectory started inside the cylinder.
   */
  bool entry_synthesized;
} DelayexitExit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates one of the builtin systems (`one_way_coupled`, `eps_coupled`,
 * `nonlinear`). `a` applies to `nonlinear`; pass NaN for the default.
 *
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum DelayexitStatus delayexit_system_builtin(const char *name,
                                              double a,
                                              struct DelayexitSystem **out);

/**
 * Creates a polynomial system from TOML config text.
 *
 * # Safety
 * `config` must be a valid C string and `out` a valid pointer.
 */
enum DelayexitStatus delayexit_system_from_config(const char *config, struct DelayexitSystem **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sys` must come from this library and not be used afterwards.
 */
void delayexit_system_free(struct DelayexitSystem *sys);

/**
 * Collision point, collision angle, coefficients, `lambda` and branch
 * invariance.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum DelayexitStatus delayexit_theorem_coeffs(const struct DelayexitSystem *sys,
                                              struct DelayexitCoeffs *out);

/**
 * Predicted exit point for entry at `x0`.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum DelayexitStatus delayexit_predict_exit(const struct DelayexitSystem *sys,
                                            double x0,
                                            struct DelayexitPrediction *out);

/**
 * Simulates from `(x0, z1, z2)` and reports the first entry into and exit
 * from the cylinder of the given radius.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum DelayexitStatus delayexit_detect_exit(const struct DelayexitSystem *sys,
                                           double x0,
                                           double z1,
                                           double z2,
                                           double eps,
                                           double cylinder_radius,
                                           double rtol,
                                           double atol,
                                           struct DelayexitExit *out);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next library call on the same thread.
 */
const char *delayexit_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *delayexit_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAYEXIT_H */
