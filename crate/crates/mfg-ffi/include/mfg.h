#ifndef MFG_H
#define MFG_H

/* Generated by cbindgen from the mfg-ffi crate. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call. Anything other than `MFG_STATUS_OK` leaves a
// description readable through `mfg_last_error_message`.
typedef enum MfgStatus {
  // The call succeeded.
  MFG_STATUS_OK = 0,
  // A required pointer argument was null.
  MFG_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MFG_STATUS_UTF8 = 2,
  // Configuration text failed to parse or validate, or the config does
  // not fit the requested run kind.
  MFG_STATUS_CONFIG = 3,
  // An argument was out of range or dimensionally inconsistent.
  MFG_STATUS_INVALID_ARGUMENT = 4,
  // The requested metric is not recorded at that iteration.
  MFG_STATUS_NOT_RECORDED = 5,
  // The run itself failed after starting.
  MFG_STATUS_RUNTIME = 6,
  // A panic was caught at the language boundary. State may be stale;
  // free the handles involved and do not reuse them.
  MFG_STATUS_PANIC = 7,
} MfgStatus;

// Per-iteration series recorded in a run's trace. Iterations are numbered
// from 1, matching the `n` column of `trace.csv`.
typedef enum MfgMetric {
  // Gain of the newest learned response over the running policy
  // mixture. Always recorded; may be negative for sampling-based
  // solvers.
  MFG_METRIC_APPROX_EXPLOITABILITY = 0,
  // Gain of the exact best response over the running policy mixture.
  // Recorded only when the run computes diagnostics.
  MFG_METRIC_EXPLOITABILITY = 1,
  // Gap between the exact and the learned response, so that
  // exploitability = learning error + approximate exploitability.
  // Recorded only when the run computes diagnostics.
  MFG_METRIC_LEARNING_ERROR = 2,
  // Distance between successive population averages. Always recorded.
  MFG_METRIC_AVG_FLOW_STEP = 3,
  // Distance between successive best-response flows. Absent at the
  // final iteration, which has no successor.
  MFG_METRIC_BR_FLOW_STEP = 4,
  // Distance between the exact and the learned best-response flow.
  // Recorded only when the run computes diagnostics.
  MFG_METRIC_EXACT_VS_LEARNED_FLOW = 5,
  // L2 gap between the population density and the closed-form
  // equilibrium density. Recorded only for the torus congestion
  // benchmark.
  MFG_METRIC_L2_DENSITY_ERROR = 6,
  // L2 gap between the mean initial control and the closed-form
  // equilibrium control. Recorded only for the torus congestion
  // benchmark.
  MFG_METRIC_L2_CONTROL_ERROR = 7,
} MfgMetric;

// Opaque run configuration. Create with `mfg_run_config_default` or
// `mfg_run_config_parse`, release with `mfg_run_config_free`.
typedef struct MfgRunConfig MfgRunConfig;

// Opaque record of a finished run: the final population, the mean
// control, and the per-iteration trace. Release with `mfg_result_free`.
typedef struct MfgRunResult MfgRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version string. Statically allocated; do not free.
const char *mfg_version(void);

// Description of the most recent failure on the calling thread, as a
// NUL-terminated UTF-8 string. Empty if nothing has failed yet. The
// pointer stays valid until the next failing call on the same thread; do
// not free it.
const char *mfg_last_error_message(void);

// New configuration with every key at its default. Never fails.
struct MfgRunConfig *mfg_run_config_default(void);

// Parse configuration text in `key = value` form, one pair per line, with
// `#` comments. Unknown keys, duplicate keys, and malformed values are
// errors. On success writes a new handle to `out`.
//
// # Safety
// `text` must point to a NUL-terminated string and `out` must be valid
// for one pointer write. Both may be null; that is reported as an error.
enum MfgStatus mfg_run_config_parse(const char *text, struct MfgRunConfig **out);

// Set a single key, using the same syntax and validation as the config
// file. Cross-key constraints are checked when the config is run, not
// here.
//
// # Safety
// `config` must be a live handle from this library, and `key` and `value`
// must point to NUL-terminated strings. Nulls are reported as errors.
enum MfgStatus mfg_run_config_set(struct MfgRunConfig *config, const char *key, const char *value);

// Canonical serialization of every key at its resolved value. Parsing the
// snapshot reproduces the configuration exactly. Returns null only if
// `config` is null. Free the string with `mfg_string_free`.
//
// # Safety
// `config` must be null or a live handle from this library.
char *mfg_run_config_snapshot(const struct MfgRunConfig *config);

// Release a configuration handle. Accepts null.
//
// # Safety
// `config` must be null or a handle from this library that has not been
// freed before.
void mfg_run_config_free(struct MfgRunConfig *config);

// Release a string returned by this library. Accepts null.
//
// # Safety
// `s` must be null or a string returned by this library that has not been
// freed before.
void mfg_string_free(char *s);

// Run fictitious play with the exact dynamic-programming best response.
// Needs `mode = finite_horizon`. On success writes a new result handle to
// `out`.
//
// # Safety
// `config` must be a live handle from this library and `out` must be
// valid for one pointer write. Nulls are reported as errors.
enum MfgStatus mfg_run_exact_fp(const struct MfgRunConfig *config, struct MfgRunResult **out);

// Run fictitious play with an approximate best response. Needs
// `mode = finite_horizon` and `solver = perturbed` or `q_learning`. On
// success writes a new result handle to `out`.
//
// # Safety
// `config` must be a live handle from this library and `out` must be
// valid for one pointer write. Nulls are reported as errors.
enum MfgStatus mfg_run_approximate_fp(const struct MfgRunConfig *config, struct MfgRunResult **out);

// Run stationary model-free fictitious play. Needs `mode = stationary`
// and `solver = q_learning`. On success writes a new result handle to
// `out`.
//
// # Safety
// `config` must be a live handle from this library and `out` must be
// valid for one pointer write. Nulls are reported as errors.
enum MfgStatus mfg_run_modelfree_fp(const struct MfgRunConfig *config, struct MfgRunResult **out);

// Number of iterations recorded in the run's trace. Returns 0 if
// `result` is null.
//
// # Safety
// `result` must be null or a live handle from this library.
size_t mfg_result_num_iterations(const struct MfgRunResult *result);

// Number of state cells in the run's grid. Returns 0 if `result` is
// null.
//
// # Safety
// `result` must be null or a live handle from this library.
size_t mfg_result_num_cells(const struct MfgRunResult *result);

// Read one metric at one iteration (1-based, matching the `n` column of
// `trace.csv`). Returns `MFG_STATUS_NOT_RECORDED` for series the run did
// not record; see the `MfgMetric` variants for when that happens.
//
// # Safety
// `result` must be a live handle from this library and `out` must be
// valid for one `double` write. Nulls are reported as errors.
enum MfgStatus mfg_result_metric(const struct MfgRunResult *result,
                                 enum MfgMetric metric,
                                 size_t iteration,
                                 double *out);

// Copy the final population density into `buffer`, which must hold
// exactly `mfg_result_num_cells` entries. For finite-horizon runs this is
// the last time slice of the averaged flow; for stationary runs it is the
// estimated stationary density.
//
// # Safety
// `result` must be a live handle from this library and `buffer` must be
// valid for `length` `double` writes. Nulls are reported as errors.
enum MfgStatus mfg_result_final_density(const struct MfgRunResult *result,
                                        double *buffer,
                                        size_t length);

// Copy the mean control at the initial time step into `buffer`, which
// must hold exactly `mfg_result_num_cells` entries. For stationary runs
// this is the single learned control row.
//
// # Safety
// `result` must be a live handle from this library and `buffer` must be
// valid for `length` `double` writes. Nulls are reported as errors.
enum MfgStatus mfg_result_initial_control(const struct MfgRunResult *result,
                                          double *buffer,
                                          size_t length);

// Release a result handle. Accepts null.
//
// # Safety
// `result` must be null or a handle from this library that has not been
// freed before.
void mfg_result_free(struct MfgRunResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFG_H */
