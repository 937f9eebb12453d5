#ifndef SUBEXP_H
#define SUBEXP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SubexpStatus {
  SUBEXP_STATUS_OK = 0,
  SUBEXP_STATUS_NULL_POINTER = 1,
  SUBEXP_STATUS_INVALID_ARGUMENT = 2,
  SUBEXP_STATUS_QUADRATURE_FAILED = 3,
  SUBEXP_STATUS_PRECONDITION = 4,
  /**
   * The bracket is not a single value; the `lo`/`hi` outputs still hold it.
   */
  SUBEXP_STATUS_BRACKETED = 5,
  SUBEXP_STATUS_INTERNAL = 6,
} SubexpStatus;

/**
 * Model constants and the measure built from them.
 */
typedef struct SubexpModel SubexpModel;

/**
 * `b^scale * mantissa + offset`.
 */
typedef struct SubexpPoint {
  int64_t scale;
  double mantissa;
  double offset;
} SubexpPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a model from the seven construction constants; `rel_tol <= 0` selects the default tolerance.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SubexpStatus subexp_model_new(double b,
                                   double x0,
                                   double delta,
                                   double alpha,
                                   double beta,
                                   double x1,
                                   double x2,
                                   double rel_tol,
                                   struct SubexpModel **out);

/**
 * Creates a model with the default constants `b = 4, x0 = 2, delta = 1/4, alpha = 1, beta = 2, x1 = 1/2, x2 = 3/2`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SubexpStatus subexp_model_default(struct SubexpModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and must not be used afterwards.
 */
void subexp_model_free(struct SubexpModel *model);

/**
 * The normalizing constant `M` of `phi`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SubexpStatus subexp_normalizer(const struct SubexpModel *model, double *out);

/**
 * `h(ln x)` at a point `x >= 1`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SubexpStatus subexp_profile_value(const struct SubexpModel *model,
                                       struct SubexpPoint x,
                                       double *out);

/**
 * `ln phi(x)` (unnormalized), `-inf` below 1.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SubexpStatus subexp_phi_log_value(const struct SubexpModel *model,
                                       struct SubexpPoint x,
                                       double *out);

/**
 * `ln mu((x, x + c])`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SubexpStatus subexp_mu_log_local_mass(const struct SubexpModel *model,
                                           struct SubexpPoint x,
                                           double c,
                                           double *out);

/**
 * Bracket of `ln[(mu*mu)((x, x + c]) / mu((x, x + c])]`; equal ends unless `Bracketed` is returned.
 *
 * # Safety
 * `model` must be a live handle; `lo` and `hi` writable.
 */
enum SubexpStatus subexp_conv_log_ratio(const struct SubexpModel *model,
                                        struct SubexpPoint x,
                                        double c,
                                        double *lo,
                                        double *hi);

/**
 * Runs a named report (`thm11`, `thm12`, `lem32`, `prop11`, `tilt`) with the model's
 * constants and `k_max` atoms, writing a JSON document to `*out`.
 *
 * # Safety
 * `model` must be a live handle, `name` a nul-terminated string and `out` writable.
 * The string must be released with `subexp_string_free`.
 */
enum SubexpStatus subexp_gallery_report_json(const struct SubexpModel *model,
                                             const char *name,
                                             uint32_t k_max,
                                             char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void subexp_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty if none. Valid until the next failing call.
 */
const char *subexp_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBEXP_H */
