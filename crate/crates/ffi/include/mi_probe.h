#ifndef MI_PROBE_H
#define MI_PROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MiStatus {
  MI_STATUS_OK = 0,
  MI_STATUS_NULL_ARGUMENT = 1,
  /**
   * Configuration, usage or dimension problem.
   */
  MI_STATUS_CONFIG = 2,
  MI_STATUS_NUMERIC = 3,
  MI_STATUS_PARTIAL_PROBE = 4,
  MI_STATUS_IO = 5,
  /**
   * Malformed container or JSON.
   */
  MI_STATUS_FORMAT = 6,
  /**
   * Degenerate input such as constant features.
   */
  MI_STATUS_DEGENERATE = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  MI_STATUS_INTERNAL = 8,
} MiStatus;

typedef enum MiSide {
  MI_SIDE_INPUT = 0,
  MI_SIDE_TARGET = 1,
} MiSide;

typedef enum MiTrend {
  MI_TREND_RECONSTRUCTION_SHAPED = 0,
  MI_TREND_MONOTONE_DECREASING = 1,
  MI_TREND_OTHER = 2,
} MiTrend;

/**
 * Opaque experiment specification.
 */
typedef struct MiExperiment MiExperiment;

/**
 * Opaque layer probe report.
 */
typedef struct MiReport MiReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mi_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void mi_string_free(char *s);

/**
 * Parses an experiment spec from JSON. Missing fields take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MiStatus mi_experiment_from_json(const char *json, struct MiExperiment **out);

/**
 * Applies one `path=value` override, e.g. `train.epochs=5`.
 *
 * # Safety
 * `exp` must be a live handle and `assignment` a NUL-terminated string.
 */
enum MiStatus mi_experiment_set(struct MiExperiment *exp, const char *assignment);

/**
 * Sets the output directory of the run.
 *
 * # Safety
 * `exp` must be a live handle and `dir` a NUL-terminated string.
 */
enum MiStatus mi_experiment_set_out_dir(struct MiExperiment *exp, const char *dir);

/**
 * Config hash of the spec as a new string.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum MiStatus mi_experiment_config_hash(const struct MiExperiment *exp, char **out);

/**
 * Runs the experiment, writing its artifacts, and returns the report.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum MiStatus mi_experiment_run(const struct MiExperiment *exp, struct MiReport **out);

/**
 * # Safety
 * `exp` must be null or a handle not yet freed.
 */
void mi_experiment_free(struct MiExperiment *exp);

/**
 * Loads a report JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MiStatus mi_report_read(const char *path, struct MiReport **out);

/**
 * Number of probed layers.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum MiStatus mi_report_layer_count(const struct MiReport *report, uintptr_t *out);

/**
 * Copies the log-MI curve of `side` into `buf`, which must hold `len`
 * values; `len` must equal the layer count.
 *
 * # Safety
 * `report` must be a live handle and `buf` valid for `len` writes.
 */
enum MiStatus mi_report_log_curve(const struct MiReport *report,
                                  enum MiSide side,
                                  double *buf,
                                  uintptr_t len);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum MiStatus mi_report_trend(const struct MiReport *report, enum MiSide side, enum MiTrend *out);

/**
 * The report serialized as JSON, as a new string.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum MiStatus mi_report_to_json(const struct MiReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void mi_report_free(struct MiReport *report);

/**
 * Estimates `I(X; T)` in nats from paired frames stored row-major:
 * `x` holds `frames * dx` values and `t` holds `frames * dt`.
 * `config_json` may be null for the default estimator settings.
 *
 * # Safety
 * `x` and `t` must be valid for the stated lengths, `config_json` null or
 * NUL-terminated, and `out` a valid pointer.
 */
enum MiStatus mi_estimate(const double *x,
                          const double *t,
                          uintptr_t frames,
                          uintptr_t dx,
                          uintptr_t dt,
                          const char *config_json,
                          double *out);

/**
 * Classifies the shape of a log-MI curve of `len` values.
 *
 * # Safety
 * `curve` must be valid for `len` reads (it may be null when `len` is 0)
 * and `out` a valid pointer.
 */
enum MiStatus mi_classify_trend(const double *curve,
                                uintptr_t len,
                                double noise_band,
                                enum MiTrend *out);

/**
 * Library version as a static string.
 */
const char *mi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MI_PROBE_H */
