#ifndef SOLENOID_LAB_H
#define SOLENOID_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an FFI call.
 */
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_PARAMS = 2,
  SL_STATUS_CONFIG = 3,
  SL_STATUS_OUT_OF_DOMAIN = 4,
  SL_STATUS_NUMERICAL = 5,
  SL_STATUS_BUFFER_TOO_SMALL = 6,
  SL_STATUS_PANIC = 7,
} SlStatus;

/**
 * Opaque model handle.
 */
typedef struct SlModel SlModel;

/**
 * Closed-form constants of a model.
 */
typedef struct SlConstants {
  double gamma;
  double beta;
  double chi;
  double gamma1;
  double gamma2;
  double s1;
  double s2;
  double q1_const;
  double q2_const;
} SlConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a model with the baseline parameters.
 *
 * # Safety
 * `out` must be a valid pointer to writable handle storage.
 */
enum SlStatus sl_model_new_default(struct SlModel **out);

/**
 * Creates a model from configuration text (`key = value` lines).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer to
 * writable handle storage.
 */
enum SlStatus sl_model_new(const char *text, struct SlModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `m` must be null or a handle from `sl_model_new*` not yet freed.
 */
void sl_model_free(struct SlModel *m);

/**
 * Writes the derived constants of the model.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SlStatus sl_constants(const struct SlModel *m, struct SlConstants *out);

/**
 * Slow-down profile value `psi(r)`.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SlStatus sl_psi(const struct SlModel *m, double r, double *out);

/**
 * One step of the slow-down map on `q = (t, x, y)`.
 *
 * # Safety
 * `m` must be a live handle, `q` three readable and `out` three writable doubles.
 */
enum SlStatus sl_apply_g(const struct SlModel *m, const double *q, double *out);

/**
 * One step of the unperturbed solenoid map.
 *
 * # Safety
 * As for [`sl_apply_g`].
 */
enum SlStatus sl_apply_f(const struct SlModel *m, const double *q, double *out);

/**
 * Chart coordinates `(u, v, w)` of `q`.
 *
 * # Safety
 * As for [`sl_apply_g`].
 */
enum SlStatus sl_to_chart(const struct SlModel *m, const double *q, double *out);

/**
 * Time-one map of the slowed flow on chart coordinates `z = (u, v, w)`.
 *
 * # Safety
 * `m` must be a live handle, `z` three readable and `out` three writable doubles.
 */
enum SlStatus sl_time_one_map(const struct SlModel *m, const double *z, double *out);

/**
 * Time for the unstable-axis trajectory from `u0` to reach `r_exit <= r0`.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SlStatus sl_axis_escape_time(const struct SlModel *m, double u0, double r_exit, double *out);

/**
 * Writes `length` orbit points of `g` as `(t, x, y)` triples into `out`,
 * which holds `capacity` doubles.
 *
 * # Safety
 * `m` must be a live handle and `out` must hold `capacity` writable doubles.
 */
enum SlStatus sl_orbit(const struct SlModel *m,
                       uint64_t seed,
                       uint64_t burn_in,
                       uint64_t length,
                       double *out,
                       uintptr_t capacity);

/**
 * Copies the calling thread's last error message (NUL-terminated, possibly
 * truncated) into `buf` and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or hold `len` writable bytes.
 */
uintptr_t sl_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOLENOID_LAB_H */
