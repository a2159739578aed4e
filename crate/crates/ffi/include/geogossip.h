#ifndef GEOGOSSIP_H
#define GEOGOSSIP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GgStatus {
  GG_STATUS_OK = 0,
  GG_STATUS_NULL_POINTER = 1,
  GG_STATUS_INVALID_ARGUMENT = 2,
  GG_STATUS_CONFIG = 3,
  GG_STATUS_RUNTIME = 4,
  GG_STATUS_PANIC = 5,
} GgStatus;

typedef enum GgStopReason {
  GG_STOP_REASON_MAX_TICKS = 0,
  GG_STOP_REASON_TARGET = 1,
  GG_STOP_REASON_ROOT_DEACTIVATED = 2,
} GgStopReason;

/**
 * Opaque simulation handle.
 */
typedef struct GgSim GgSim;

/**
 * Transmissions by category, plus their total.
 */
typedef struct GgLedger {
  uint64_t near;
  uint64_t far_routing;
  uint64_t activate;
  uint64_t deactivate;
  uint64_t flood;
  uint64_t total;
} GgLedger;

typedef struct GgFaults {
  uint64_t routing_failure;
  uint64_t concurrent_violation;
  uint64_t flood_gap;
  uint64_t isolated_near;
} GgFaults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a simulation from a config body (`key = value` lines, the same
 * format as the command line tool) with `seed` overriding any seed key.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a writable pointer.
 * The handle written to `out` must be released with `gg_sim_free`.
 */
enum GgStatus gg_sim_new(const char *config, uint64_t seed, struct GgSim **out);

/**
 * # Safety
 * `sim` must be null or a handle from `gg_sim_new` not yet freed.
 */
void gg_sim_free(struct GgSim *sim);

/**
 * Fires `ticks` more clocks, ignoring stop conditions.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum GgStatus gg_sim_step(struct GgSim *sim, uint64_t ticks);

/**
 * Runs until the config's stop condition (target ratio `eps`, `max_ticks`
 * or root deactivation) fires.
 *
 * # Safety
 * `sim` must be a live handle; `reason` may be null.
 */
enum GgStatus gg_sim_run(struct GgSim *sim, enum GgStopReason *reason);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum GgStatus gg_sim_len(const struct GgSim *sim, size_t *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum GgStatus gg_sim_tick(const struct GgSim *sim, uint64_t *out);

/**
 * `|x(t)| / |x(0)|`.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum GgStatus gg_sim_err_ratio(const struct GgSim *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum GgStatus gg_sim_ledger(const struct GgSim *sim, struct GgLedger *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum GgStatus gg_sim_faults(const struct GgSim *sim, struct GgFaults *out);

/**
 * Copies the current values into `buf`, which must hold exactly
 * `gg_sim_len` doubles.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum GgStatus gg_sim_values(const struct GgSim *sim, double *buf, size_t len);

/**
 * Writes the `n x n` expected second moment of one affine pair update,
 * row-major, for weights `alpha[0..n]`.
 *
 * # Safety
 * `alpha` must be valid for `n` reads and `out` for `n * n` writes.
 */
enum GgStatus gg_kernel_second_moment(const double *alpha, size_t n, double *out);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the byte length needed
 * for the full message including the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
size_t gg_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOGOSSIP_H */
