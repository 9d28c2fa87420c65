#ifndef VIBROTACTILE_H
#define VIBROTACTILE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum VtStatus {
  VT_STATUS_OK = 0,
  // Bad argument, configuration or usage.
  VT_STATUS_USAGE = 1,
  // Unreadable or invalid data.
  VT_STATUS_DATA = 2,
  // Protocol or solver failure.
  VT_STATUS_PROTOCOL = 3,
  // A required pointer was null or a string was not UTF-8.
  VT_STATUS_NULL_OR_INVALID_STRING = 4,
  // A Rust panic was caught at the boundary.
  VT_STATUS_PANIC = 5,
} VtStatus;

// Opaque dataset handle.
typedef struct VtDataset VtDataset;

// Opaque protocol report handle.
typedef struct VtReport VtReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into this library on the same thread.
const char *vt_last_error(void);

// Library version, static storage.
const char *vt_version(void);

// Reads a dataset from a manifest path.
//
// # Safety
// `manifest` must be a NUL-terminated string; `out` must be writable.
enum VtStatus vt_dataset_read(const char *manifest, struct VtDataset **out);

// Generates a synthetic rod-tap dataset with a two-finger event skin.
//
// # Safety
// `out` must be writable.
enum VtStatus vt_dataset_simulate_rod(double length_cm,
                                      size_t n_taps,
                                      uint64_t seed,
                                      struct VtDataset **out);

// Number of recordings; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t vt_dataset_len(const struct VtDataset *ds);

// # Safety
// `ds` must be null or a handle not freed before.
void vt_dataset_free(struct VtDataset *ds);

// Runs the evaluation protocol described by key-value `spec` text (the
// same keys as a protocol spec file).
//
// # Safety
// `ds` must be a live handle, `spec` NUL-terminated, `out` writable.
enum VtStatus vt_protocol_run(const struct VtDataset *ds, const char *spec, struct VtReport **out);

// Mean and standard deviation of the per-repeat scores.
//
// # Safety
// `r` must be a live handle; `mean` and `std` writable.
enum VtStatus vt_report_summary(const struct VtReport *r, double *mean, double *std);

// Copies up to `cap` per-repeat scores into `buf`; writes the total
// count to `len`. Pass `buf = NULL` to query the count.
//
// # Safety
// `r` must be a live handle; `buf` null or valid for `cap` doubles.
enum VtStatus vt_report_scores(const struct VtReport *r, double *buf, size_t cap, size_t *len);

// Full report as JSON; release with [`vt_string_free`].
//
// # Safety
// `r` must be a live handle; `out` writable.
enum VtStatus vt_report_json(const struct VtReport *r, char **out);

// # Safety
// `r` must be null or a handle not freed before.
void vt_report_free(struct VtReport *r);

// # Safety
// `s` must be null or a string returned by this library, not freed before.
void vt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIBROTACTILE_H */
