/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CREEPDB_H
#define CREEPDB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdbStatus {
  CDB_STATUS_OK = 0,
  CDB_STATUS_NULL_ARGUMENT = 1,
  CDB_STATUS_INVALID_UTF8 = 2,
  CDB_STATUS_INVALID_ARGUMENT = 3,
  CDB_STATUS_UNDEFINED_METRIC = 4,
  CDB_STATUS_UNIT_ERROR = 5,
  CDB_STATUS_MODEL_ERROR = 6,
  CDB_STATUS_STORE_ERROR = 7,
  CDB_STATUS_PANIC = 8,
} CdbStatus;

/**
 * Opaque store handle.
 */
typedef struct CdbStore CdbStore;

typedef struct CdbMetrics {
  double precision;
  double recall;
  double f1;
  double accuracy;
} CdbMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cdb_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void cdb_string_free(char *s);

/**
 * Precision, recall, F1 and accuracy of a confusion matrix. Fails with
 * `UndefinedMetric` when any denominator is zero.
 *
 * # Safety
 * `out` must point to writable memory for one `CdbMetrics`.
 */
enum CdbStatus cdb_screening_metrics(uint64_t tp,
                                     uint64_t fp,
                                     uint64_t tn,
                                     uint64_t fn_,
                                     struct CdbMetrics *out);

/**
 * Coefficient of determination of `predicted` against `observed`.
 *
 * # Safety
 * Both arrays must hold `n` values; `out` must be writable.
 */
enum CdbStatus cdb_r_squared(const double *observed,
                             const double *predicted,
                             size_t n,
                             double *out);

/**
 * Convert `value` in `unit` to the canonical unit (K, MPa, s, fraction).
 * The canonical unit tag is written to `out_unit` when it is not null.
 *
 * # Safety
 * `unit` must be a nul-terminated string; `out_value` must be writable.
 */
enum CdbStatus cdb_standardize(double value, const char *unit, double *out_value, char **out_unit);

/**
 * Dimensional homogeneity report, as JSON, for `equation` with bindings
 * given as a JSON array of `{"symbol", "role", "unit"}`.
 *
 * # Safety
 * String arguments must be nul-terminated; `out_json` must be writable.
 */
enum CdbStatus cdb_check_homogeneity(const char *equation,
                                     const char *bindings_json,
                                     char **out_json);

/**
 * Evaluate a catalog model at `n` times (s). Parameters and conditions are
 * JSON objects mapping symbol names to canonical values.
 *
 * # Safety
 * String arguments must be nul-terminated; `times` and `out` must hold `n`
 * values.
 */
enum CdbStatus cdb_evaluate_model(const char *model,
                                  const char *params_json,
                                  const char *conditions_json,
                                  const double *times,
                                  size_t n,
                                  double *out);

/**
 * Open (or create) a store file.
 *
 * # Safety
 * `path` must be nul-terminated; `out` must be writable.
 */
enum CdbStatus cdb_store_open(const char *path, struct CdbStore **out);

/**
 * Close a store handle. Null is ignored.
 *
 * # Safety
 * `store` must come from [`cdb_store_open`] and not be closed twice.
 */
void cdb_store_close(struct CdbStore *store);

/**
 * Records matching a JSON filter (null for all), as a JSON array.
 *
 * # Safety
 * `store` must be a live handle; `out_json` must be writable.
 */
enum CdbStatus cdb_store_query_json(const struct CdbStore *store,
                                    const char *filter_json,
                                    char **out_json);

/**
 * CSV export of the records matching a JSON filter (null for all).
 *
 * # Safety
 * `store` must be a live handle; `out_csv` must be writable.
 */
enum CdbStatus cdb_store_export_csv(const struct CdbStore *store,
                                    const char *filter_json,
                                    char **out_csv);

/**
 * Distribution statistics with default histogram edges, as JSON.
 *
 * # Safety
 * `store` must be a live handle; `out_json` must be writable.
 */
enum CdbStatus cdb_store_stats_json(const struct CdbStore *store,
                                    const char *filter_json,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CREEPDB_H */
