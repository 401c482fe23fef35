#ifndef IDPGUARD_H
#define IDPGUARD_H

/* Generated by cbindgen from the idpguard-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every FFI call.
 */
typedef enum IdpGuardStatus {
  IdpGuardStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  IdpGuardStatus_NullArgument = 1,
  /**
   * A path argument was not valid UTF-8.
   */
  IdpGuardStatus_InvalidUtf8 = 2,
  /**
   * An artifact could not be loaded or validated.
   */
  IdpGuardStatus_ArtifactError = 3,
  /**
   * The query was malformed (wrong input dimension).
   */
  IdpGuardStatus_QueryError = 4,
  /**
   * An unexpected internal failure; see `idpguard_last_error`.
   */
  IdpGuardStatus_InternalError = 5,
} IdpGuardStatus;

/**
 * Opaque guard handle.
 */
typedef struct IdpGuard IdpGuard;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `cap > 0`). Returns the full message length
 * including the NUL terminator, so callers can size a retry buffer.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (then only the
 * required length is returned).
 */
size_t idpguard_last_error(char *buf, size_t cap);

/**
 * Version of the underlying crate as a static NUL-terminated string.
 */
const char *idpguard_version(void);

/**
 * Open a guard from artifact files.
 *
 * `network_path` is a network JSON, `bounds_path` a bounds JSON produced
 * by `idpguard bound`. On success writes a handle to `out_guard`; free it
 * with [`idpguard_guard_free`].
 *
 * # Safety
 * `network_path` and `bounds_path` must be NUL-terminated strings and
 * `out_guard` a valid pointer.
 */
enum IdpGuardStatus idpguard_guard_open(const char *network_path,
                                        const char *bounds_path,
                                        double epsilon,
                                        uint64_t seed,
                                        size_t memo_capacity,
                                        struct IdpGuard **out_guard);

/**
 * Answer one guarded label-only query.
 *
 * `features` must point to `len == input_dim` doubles; the label lands in
 * `out_label`.
 *
 * # Safety
 * `guard` must be a live handle from [`idpguard_guard_open`]; `features`
 * must point to `len` readable doubles; `out_label` must be writable.
 */
enum IdpGuardStatus idpguard_guard_query(const struct IdpGuard *guard,
                                         const double *features,
                                         size_t len,
                                         uint32_t *out_label);

/**
 * Input dimension expected by the guard's network; 0 for a null handle.
 *
 * # Safety
 * `guard` must be null or a live handle.
 */
size_t idpguard_guard_input_dim(const struct IdpGuard *guard);

/**
 * Number of classes of the guard's network; 0 for a null handle.
 *
 * # Safety
 * `guard` must be null or a live handle.
 */
size_t idpguard_guard_num_classes(const struct IdpGuard *guard);

/**
 * Release a handle. Null is a no-op; double-free is undefined behavior.
 *
 * # Safety
 * `guard` must be null or a handle not yet freed.
 */
void idpguard_guard_free(struct IdpGuard *guard);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IDPGUARD_H */
