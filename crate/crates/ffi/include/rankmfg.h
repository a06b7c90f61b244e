#ifndef RANKMFG_H
#define RANKMFG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum rankmfg_status {
  RANKMFG_STATUS_OK = 0,
  RANKMFG_STATUS_NULL_POINTER = 1,
  RANKMFG_STATUS_INVALID_UTF8 = 2,
  RANKMFG_STATUS_PARSE = 3,
  RANKMFG_STATUS_CONFIG = 4,
  RANKMFG_STATUS_DOMAIN = 5,
  RANKMFG_STATUS_OVERFLOW = 6,
  RANKMFG_STATUS_NON_CONVERGENCE = 7,
  RANKMFG_STATUS_NON_FINITE = 8,
  RANKMFG_STATUS_INSTABILITY = 9,
  RANKMFG_STATUS_GRID_MISMATCH = 10,
  RANKMFG_STATUS_PATH = 11,
  RANKMFG_STATUS_IO = 12,
  RANKMFG_STATUS_BUFFER_TOO_SMALL = 13,
  RANKMFG_STATUS_PANIC = 14,
} rankmfg_status;

/**
 * Result of a fictitious-play run.
 */
typedef struct rankmfg_equilibrium rankmfg_equilibrium;

/**
 * Model instance plus the grid and solver settings from its config.
 */
typedef struct rankmfg_model rankmfg_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len`. Returns the buffer size needed for the full message.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rankmfg_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rankmfg_version(void);

/**
 * Parses a JSON configuration into a model handle. Shape errors fail here;
 * modelling assumptions are checked by [`rankmfg_model_validate`].
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum rankmfg_status rankmfg_model_from_json(const char *json, struct rankmfg_model **out);

/**
 * # Safety
 * `model` must be null or a handle from [`rankmfg_model_from_json`] not yet freed.
 */
void rankmfg_model_free(struct rankmfg_model *model);

/**
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum rankmfg_status rankmfg_model_regimes(const struct rankmfg_model *model, size_t *out);

/**
 * Checks the modelling assumptions. `valid` receives 1 or 0; the report
 * text is copied into `report` (may be null) as with [`rankmfg_last_error`]
 * and its full size is written to `report_needed` (may be null).
 *
 * # Safety
 * `model` must be a live handle; `valid` valid for writes; `report` null or
 * valid for `report_len` bytes; `report_needed` null or valid for writes.
 */
enum rankmfg_status rankmfg_model_validate(const struct rankmfg_model *model,
                                           int32_t *valid,
                                           char *report,
                                           size_t report_len,
                                           size_t *report_needed);

/**
 * Evaluates the reward `R(x)` for `x` in `[0, 1]`.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum rankmfg_status rankmfg_reward_eval(const struct rankmfg_model *model, double x, double *out);

/**
 * Runs fictitious play on the model's configured grid. `eta <= 0` and
 * `max_iters == 0` fall back to the configured values.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum rankmfg_status rankmfg_run_fp(const struct rankmfg_model *model,
                                   double eta,
                                   size_t max_iters,
                                   struct rankmfg_equilibrium **out);

/**
 * # Safety
 * `eq` must be null or a handle from [`rankmfg_run_fp`] not yet freed.
 */
void rankmfg_equilibrium_free(struct rankmfg_equilibrium *eq);

/**
 * Number of grid nodes, regimes and fictitious-play iterations.
 *
 * # Safety
 * `eq` must be a live handle; each output pointer null or valid for writes.
 */
enum rankmfg_status rankmfg_equilibrium_dims(const struct rankmfg_equilibrium *eq,
                                             size_t *nodes,
                                             size_t *regimes,
                                             size_t *iterations);

/**
 * Final exploitability and payoff.
 *
 * # Safety
 * `eq` must be a live handle; each output pointer null or valid for writes.
 */
enum rankmfg_status rankmfg_equilibrium_summary(const struct rankmfg_equilibrium *eq,
                                                double *exploitability,
                                                double *payoff);

/**
 * Grid times, one per node.
 *
 * # Safety
 * `eq` must be a live handle; `buf` valid for `len` doubles; `needed` null
 * or valid for writes.
 */
enum rankmfg_status rankmfg_equilibrium_times(const struct rankmfg_equilibrium *eq,
                                              double *buf,
                                              size_t len,
                                              size_t *needed);

/**
 * Equilibrium aggregate progress, one value per node.
 *
 * # Safety
 * As [`rankmfg_equilibrium_times`].
 */
enum rankmfg_status rankmfg_equilibrium_rho(const struct rankmfg_equilibrium *eq,
                                            double *buf,
                                            size_t len,
                                            size_t *needed);

/**
 * Value function, node-major (`nodes x regimes`).
 *
 * # Safety
 * As [`rankmfg_equilibrium_times`].
 */
enum rankmfg_status rankmfg_equilibrium_value(const struct rankmfg_equilibrium *eq,
                                              double *buf,
                                              size_t len,
                                              size_t *needed);

/**
 * Gibbs generator, node-major (`nodes x regimes x regimes`), diagonal
 * included.
 *
 * # Safety
 * As [`rankmfg_equilibrium_times`].
 */
enum rankmfg_status rankmfg_equilibrium_policy(const struct rankmfg_equilibrium *eq,
                                               double *buf,
                                               size_t len,
                                               size_t *needed);

/**
 * Softmax initial law over regimes.
 *
 * # Safety
 * As [`rankmfg_equilibrium_times`].
 */
enum rankmfg_status rankmfg_equilibrium_initial_law(const struct rankmfg_equilibrium *eq,
                                                    double *buf,
                                                    size_t len,
                                                    size_t *needed);

/**
 * Exploitability per iteration, starting at `n = 1`.
 *
 * # Safety
 * As [`rankmfg_equilibrium_times`].
 */
enum rankmfg_status rankmfg_equilibrium_exploitability(const struct rankmfg_equilibrium *eq,
                                                       double *buf,
                                                       size_t len,
                                                       size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANKMFG_H */
