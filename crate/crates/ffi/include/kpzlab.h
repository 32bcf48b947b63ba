#ifndef KPZLAB_H
#define KPZLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum KpzStatus {
  KPZ_STATUS_OK = 0,
  /**
   * The experiment ran and at least one check failed.
   */
  KPZ_STATUS_CHECK_FAILED = 1,
  KPZ_STATUS_CONFIG_ERROR = 2,
  KPZ_STATUS_NUMERICAL_ABORT = 3,
  KPZ_STATUS_NULL_POINTER = 4,
  KPZ_STATUS_INVALID_UTF8 = 5,
  KPZ_STATUS_INVALID_ARGUMENT = 6,
  KPZ_STATUS_IO = 7,
  KPZ_STATUS_PANIC = 8,
} KpzStatus;

/**
 * Mollifier profile selector.
 */
typedef enum KpzShape {
  KPZ_SHAPE_BUMP = 0,
  KPZ_SHAPE_TRIANGLE_CONVOLVED = 1,
} KpzShape;

/**
 * Experiment configuration under construction.
 */
typedef struct KpzConfig KpzConfig;

/**
 * Derived kernels of one mollifier.
 */
typedef struct KpzKernels KpzKernels;

/**
 * Finished run: status, run directory and deterministic report.
 */
typedef struct KpzRun KpzRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *kpz_last_error(void);

/**
 * Library version as a static string.
 */
const char *kpz_version(void);

/**
 * Creates a configuration for the named experiment (e.g. `"she-sim"`) with
 * default parameters.
 *
 * # Safety
 * `experiment` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KpzStatus kpz_config_new(const char *experiment, struct KpzConfig **out);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `cfg` must come from [`kpz_config_new`] and not be used afterwards.
 */
void kpz_config_free(struct KpzConfig *cfg);

/**
 * Overrides one parameter of the experiment section. The value uses TOML
 * syntax; comma lists and bare strings are also accepted.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum KpzStatus kpz_config_set(struct KpzConfig *cfg, const char *key, const char *value);

/**
 * Sets the master seed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum KpzStatus kpz_config_set_seed(struct KpzConfig *cfg, uint64_t seed);

/**
 * Sets the worker thread count; 0 selects the global pool.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum KpzStatus kpz_config_set_threads(struct KpzConfig *cfg, size_t threads);

/**
 * Sets the output root directory.
 *
 * # Safety
 * `cfg` must be a live handle and `dir` a NUL-terminated string.
 */
enum KpzStatus kpz_config_set_out(struct KpzConfig *cfg, const char *dir);

/**
 * Loads a TOML config file underneath the overrides set so far.
 *
 * # Safety
 * `cfg` must be a live handle and `path` a NUL-terminated string.
 */
enum KpzStatus kpz_config_load_file(struct KpzConfig *cfg, const char *path);

/**
 * Runs the experiment and writes its artifacts. On return `*out` holds a run
 * handle whenever the experiment started, including when checks failed; the
 * status mirrors the command-line exit code.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a writable pointer.
 */
enum KpzStatus kpz_run(const struct KpzConfig *cfg, struct KpzRun **out);

/**
 * Status of a finished run.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
enum KpzStatus kpz_run_status(const struct KpzRun *run);

/**
 * Deterministic JSON report, or null when the run did not finish. Owned by
 * the run handle.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
const char *kpz_run_report_json(const struct KpzRun *run);

/**
 * Directory holding the run artifacts, or null. Owned by the run handle.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
const char *kpz_run_dir(const struct KpzRun *run);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from [`kpz_run`] and not be used afterwards.
 */
void kpz_run_free(struct KpzRun *run);

/**
 * Builds the noise covariance kernels for a mollifier of width `epsilon`.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum KpzStatus kpz_kernels_new(enum KpzShape shape, double epsilon, struct KpzKernels **out);

/**
 * Releases kernels. Null is ignored.
 *
 * # Safety
 * `k` must come from [`kpz_kernels_new`] and not be used afterwards.
 */
void kpz_kernels_free(struct KpzKernels *k);

/**
 * Evaluates covariance, its derivative and the odd primitive at `x`. Any of
 * the out pointers may be null.
 *
 * # Safety
 * `k` must be a live handle; non-null out pointers must be writable.
 */
enum KpzStatus kpz_kernels_eval(const struct KpzKernels *k,
                                double x,
                                double *covariance,
                                double *derivative,
                                double *primitive);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KPZLAB_H */
