#ifndef MINOTAUR_H
#define MINOTAUR_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MinotaurStatus {
  MINOTAUR_STATUS_OK = 0,
  MINOTAUR_STATUS_NULL_ARGUMENT = 1,
  MINOTAUR_STATUS_INVALID_UTF8 = 2,
  MINOTAUR_STATUS_INVALID_CONFIG = 3,
  MINOTAUR_STATUS_SIMULATION = 4,
  MINOTAUR_STATUS_IO = 5,
  MINOTAUR_STATUS_PANIC = 6,
} MinotaurStatus;

/**
 * The outcome of a scenario or experiment run.
 */
typedef struct MinotaurReport MinotaurReport;

/**
 * A parsed and validated scenario.
 */
typedef struct MinotaurScenario MinotaurScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * owned by the library and stays valid until the next call.
 */
const char *minotaur_last_error(void);

/**
 * Parses and validates a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MinotaurStatus minotaur_scenario_from_toml(const char *toml, struct MinotaurScenario **out);

/**
 * Number of seeds the scenario will run.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
uintptr_t minotaur_scenario_seed_count(const struct MinotaurScenario *scenario);

/**
 * Runs every seed of the scenario with the safety monitors.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a writable pointer.
 */
enum MinotaurStatus minotaur_scenario_run(const struct MinotaurScenario *scenario,
                                          struct MinotaurReport **out);

/**
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void minotaur_scenario_free(struct MinotaurScenario *scenario);

/**
 * Runs a built-in experiment over seeds `0..seeds`; zero picks the recipe's
 * default. `overrides` holds `count` strings of the form `key=value`.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `overrides` must point to `count`
 * such strings (or be null when `count` is zero) and `out` must be writable.
 */
enum MinotaurStatus minotaur_experiment_run(const char *name,
                                            const char *const *overrides,
                                            uintptr_t count,
                                            uint64_t seeds,
                                            struct MinotaurReport **out);

/**
 * Monitor violations recorded by the run.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
uintptr_t minotaur_report_violations(const struct MinotaurReport *report);

/**
 * The run's CSV table. Free the string with [`minotaur_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` a writable pointer.
 */
enum MinotaurStatus minotaur_report_csv(const struct MinotaurReport *report, char **out);

/**
 * Writes the CSV, manifest and violation files into `dir`.
 *
 * # Safety
 * `report` must be a live handle and `dir` a NUL-terminated path.
 */
enum MinotaurStatus minotaur_report_write(const struct MinotaurReport *report, const char *dir);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void minotaur_report_free(struct MinotaurReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void minotaur_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINOTAUR_H */
