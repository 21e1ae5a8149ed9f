#ifndef NSLB_H
#define NSLB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Experiments runnable through [`nslb_run_experiment`].
typedef enum NslbExperiment {
  NSLB_EXPERIMENT_SIMULATE = 0,
  NSLB_EXPERIMENT_TRANSFORM_CHECK = 1,
  NSLB_EXPERIMENT_FIT_SINGULARITY = 2,
  NSLB_EXPERIMENT_VERIFY_KERNELS = 3,
  NSLB_EXPERIMENT_RESCALE_AUDIT = 4,
  NSLB_EXPERIMENT_DUHAMEL_RESIDUAL = 5,
} NslbExperiment;

// Result code of every exported function.
typedef enum NslbStatus {
  NSLB_STATUS_OK = 0,
  NSLB_STATUS_NULL_POINTER = 1,
  NSLB_STATUS_INVALID_ARGUMENT = 2,
  NSLB_STATUS_CONFIG = 3,
  NSLB_STATUS_IO = 4,
  NSLB_STATUS_FORMAT = 5,
  NSLB_STATUS_NUMERICAL = 6,
  NSLB_STATUS_PANIC = 7,
} NslbStatus;

// Parsed experiment configuration.
typedef struct NslbConfig NslbConfig;

// Outcome of one experiment run.
typedef struct NslbReport NslbReport;

// A time-stamped grid field.
typedef struct NslbSnapshot NslbSnapshot;

// Shape and time of a snapshot.
typedef struct NslbSnapshotInfo {
  uintptr_t dim;
  uintptr_t n;
  uintptr_t components;
  // Values per component, `n^dim`.
  uintptr_t points;
  double time;
} NslbSnapshotInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, empty after a success. The
// pointer stays valid until the next call into the library on this thread.
const char *nslb_last_error(void);

// Library version as a static NUL-terminated string.
const char *nslb_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void nslb_string_free(char *s);

// Parses TOML configuration text. Relative paths inside it resolve against
// `base_dir`, or the working directory when `base_dir` is null.
//
// # Safety
// `toml_text` and `base_dir` must be NUL-terminated strings or null; `out`
// must be writable.
enum NslbStatus nslb_config_parse(const char *toml_text,
                                  const char *base_dir,
                                  struct NslbConfig **out);

// Loads a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NslbStatus nslb_config_load(const char *path, struct NslbConfig **out);

// # Safety
// `config` must come from `nslb_config_parse`/`nslb_config_load` or be null.
void nslb_config_free(struct NslbConfig *config);

// Runs an experiment, writing its artifacts under `out_dir`. A report is
// returned even when checks fail; inspect it with [`nslb_report_passed`].
// When `override_seed` is false the config seed is used.
//
// # Safety
// `config` must be a live handle, `out_dir` a NUL-terminated string and
// `out` writable.
enum NslbStatus nslb_run_experiment(const struct NslbConfig *config,
                                    enum NslbExperiment experiment,
                                    const char *out_dir,
                                    bool override_seed,
                                    uint64_t seed,
                                    struct NslbReport **out);

// # Safety
// `report` must be a live handle and `passed` writable.
enum NslbStatus nslb_report_passed(const struct NslbReport *report, bool *passed);

// Number of checks in the report.
//
// # Safety
// `report` must be a live handle and `count` writable.
enum NslbStatus nslb_report_check_count(const struct NslbReport *report, uintptr_t *count);

// Outcome of check `index`. `name` receives a string to release with
// [`nslb_string_free`]; `measured`, `threshold` and `passed` may be null.
//
// # Safety
// `report` must be a live handle; non-null out pointers must be writable.
enum NslbStatus nslb_report_check(const struct NslbReport *report,
                                  uintptr_t index,
                                  char **name,
                                  double *measured,
                                  double *threshold,
                                  bool *passed);

// The report as deterministic JSON, released with [`nslb_string_free`].
//
// # Safety
// `report` must be a live handle and `json` writable.
enum NslbStatus nslb_report_json(const struct NslbReport *report, char **json);

// # Safety
// `report` must come from `nslb_run_experiment` or be null.
void nslb_report_free(struct NslbReport *report);

// Taylor-Green vortex of the given amplitude at time 0. In three
// dimensions this is the classical `(sin x cos y cos z, -cos x sin y cos z, 0)`
// cell with `2 pi` wavenumbers.
//
// # Safety
// `out` must be writable.
enum NslbStatus nslb_snapshot_taylor_green(uintptr_t dim,
                                           uintptr_t n,
                                           double amplitude,
                                           struct NslbSnapshot **out);

// Builds a snapshot from `components * n^dim` values, each component in
// turn, row-major with the last axis fastest.
//
// # Safety
// `values` must point to `len` readable doubles; `out` must be writable.
enum NslbStatus nslb_snapshot_new(uintptr_t dim,
                                  uintptr_t n,
                                  uintptr_t components,
                                  double time,
                                  const double *values,
                                  uintptr_t len,
                                  struct NslbSnapshot **out);

// Reads a binary snapshot file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NslbStatus nslb_snapshot_read(const char *path, struct NslbSnapshot **out);

// Writes a binary snapshot file.
//
// # Safety
// `snapshot` must be a live handle and `path` a NUL-terminated string.
enum NslbStatus nslb_snapshot_write(const struct NslbSnapshot *snapshot, const char *path);

// # Safety
// `snapshot` must be a live handle and `info` writable.
enum NslbStatus nslb_snapshot_info(const struct NslbSnapshot *snapshot,
                                   struct NslbSnapshotInfo *info);

// Copies component `component` into `buffer`, which must hold `n^dim` values.
//
// # Safety
// `snapshot` must be a live handle and `buffer` writable for `len` doubles.
enum NslbStatus nslb_snapshot_component(const struct NslbSnapshot *snapshot,
                                        uintptr_t component,
                                        double *buffer,
                                        uintptr_t len);

// Integrates the Navier-Stokes equations from `initial` to `t_end` and
// returns the final state. The initial velocity is dealiased and projected;
// a run stopped by the blow-up guard fails with `Numerical`.
//
// # Safety
// `initial` must be a live velocity handle (`dim` components); `out` must be writable.
enum NslbStatus nslb_simulate(const struct NslbSnapshot *initial,
                              double nu,
                              double dt,
                              double t_end,
                              struct NslbSnapshot **out);

// # Safety
// `snapshot` must come from this library or be null.
void nslb_snapshot_free(struct NslbSnapshot *snapshot);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NSLB_H */
