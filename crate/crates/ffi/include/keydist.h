#ifndef KEYDIST_H
#define KEYDIST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Use exact per-table distributions instead of the trained models.
 */
#define KD_EXACT 1

/**
 * Count-based instead of selectivity-based inference (inner equi-joins only).
 */
#define KD_COUNT_BASED 2

/**
 * Status codes; 2-5 match the command-line exit codes.
 */
typedef enum KdStatus {
  KD_STATUS_OK = 0,
  /**
   * Null pointer or non-UTF-8 string.
   */
  KD_STATUS_INVALID_ARGUMENT = 1,
  KD_STATUS_USAGE = 2,
  KD_STATUS_DATA = 3,
  KD_STATUS_INTEGRITY = 4,
  KD_STATUS_RESOURCE = 5,
  /**
   * The library panicked; the handle is still safe to free.
   */
  KD_STATUS_PANIC = 6,
} KdStatus;

/**
 * Opaque bundle handle. Safe to share across threads; updates swap atomically.
 */
typedef struct KdBundle KdBundle;

typedef struct KdEstimate {
  double cardinality;
  double selectivity;
  /**
   * Size of the unfiltered join.
   */
  double schema_card;
  /**
   * The unfiltered join is empty and the estimate is 0.
   */
  bool zero_join;
} KdEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *kd_version(void);

/**
 * Message of the last failed call on this thread; empty after a successful call.
 * Valid until the next call on this thread.
 */
const char *kd_last_error_message(void);

/**
 * Loads a bundle file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KdStatus kd_bundle_load(const char *path, struct KdBundle **out);

/**
 * Releases a bundle; null is ignored.
 *
 * # Safety
 * `b` must come from [`kd_bundle_load`] and not be used afterwards.
 */
void kd_bundle_free(struct KdBundle *b);

/**
 * Writes the current state of the bundle to `path`.
 *
 * # Safety
 * `b` must be a live handle and `path` a NUL-terminated string.
 */
enum KdStatus kd_bundle_save(const struct KdBundle *b, const char *path);

/**
 * Table names as a JSON array, to be freed with [`kd_string_free`].
 *
 * # Safety
 * `b` must be a live handle and `out` a valid pointer.
 */
enum KdStatus kd_bundle_tables_json(const struct KdBundle *b, char **out);

/**
 * Estimates one query given as JSON (`{"tables": [...], "join_op": "=", ...}`).
 * `flags` combines [`KD_EXACT`] and [`KD_COUNT_BASED`].
 *
 * # Safety
 * `b` must be a live handle, `query_json` a NUL-terminated string and `out` valid.
 */
enum KdStatus kd_estimate(const struct KdBundle *b,
                          const char *query_json,
                          uint32_t flags,
                          struct KdEstimate *out);

/**
 * Aligned key domain and per-table vectors of a query as JSON, to be freed with
 * [`kd_string_free`].
 *
 * # Safety
 * As for [`kd_estimate`]; `out` must be a valid pointer.
 */
enum KdStatus kd_distributions_json(const struct KdBundle *b,
                                    const char *query_json,
                                    uint32_t flags,
                                    char **out);

/**
 * Appends the rows of a CSV file to `table`, retrains that table only and swaps the
 * result in. Concurrent readers keep the previous state until the swap.
 *
 * # Safety
 * `b` must be a live handle; `table` and `csv_path` NUL-terminated strings.
 */
enum KdStatus kd_update_table(const struct KdBundle *b, const char *table, const char *csv_path);

/**
 * Q-error of an estimate, both sides floored at 1.
 */
double kd_qerror(double estimate, double actual);

/**
 * Frees a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void kd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEYDIST_H */
