#ifndef STEPSELECT_H
#define STEPSELECT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum {
  SS_OK = 0,
  SS_ERR_NULL_POINTER = 1,
  SS_ERR_FORMAT = 2,
  SS_ERR_EMPTY_DATA = 3,
  SS_ERR_BOUNDS = 4,
  SS_ERR_INVALID_CODE = 5,
  SS_ERR_CONSTRAINT = 6,
  SS_ERR_NOT_FOUND = 7,
  SS_ERR_IO = 8,
  SS_ERR_INVALID_ARGUMENT = 9,
  SS_ERR_PANIC = 10,
} ss_status;

/**
 * Aggregation applied over the region for the statistical cost.
 */
typedef enum {
  SS_AGG_MAX = 0,
  SS_AGG_MIN = 1,
  SS_AGG_AVG = 2,
} ss_aggregation;

/**
 * Opaque dataset handle.
 */
typedef struct ss_dataset ss_dataset;

/**
 * Opaque selection handle.
 */
typedef struct ss_selection ss_selection;

/**
 * Selection request. `pinned`/`excluded` may be null when their length is 0.
 * The region is used only when `has_region` is non-zero.
 */
typedef struct {
  double alpha;
  double beta;
  size_t k;
  double gamma;
  double sigma;
  ss_aggregation aggregation;
  size_t range_start;
  size_t range_end;
  int32_t has_region;
  /**
   * `x0, y0, x1, y1`, inclusive.
   */
  size_t region[4];
  const size_t *pinned;
  size_t pinned_len;
  const size_t *excluded;
  size_t excluded_len;
} ss_select_params;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *ss_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Opens a frame-stack or CSV directory.
 */
ss_status ss_dataset_open(const char *path, ss_dataset **out);

/**
 * Generates a synthetic dataset. `family` is one of "ramp", "burst",
 * "blob", "seasonal"; `bursts` may be null when `bursts_len` is 0.
 */
ss_status ss_dataset_synthesize(const char *family,
                                size_t frames,
                                size_t width,
                                size_t height,
                                uint64_t seed,
                                const size_t *bursts,
                                size_t bursts_len,
                                ss_dataset **out);

/**
 * Builds a dataset from `count` row-major frames of `width × height` values
 * laid out consecutively. NaN marks missing cells. Timestamps are hourly.
 */
ss_status ss_dataset_from_values(const char *id,
                                 size_t width,
                                 size_t height,
                                 size_t count,
                                 const double *values,
                                 ss_dataset **out);

void ss_dataset_free(ss_dataset *dataset);

/**
 * Number of frames; 0 for a null handle.
 */
size_t ss_dataset_len(const ss_dataset *dataset);

size_t ss_dataset_width(const ss_dataset *dataset);

size_t ss_dataset_height(const ss_dataset *dataset);

/**
 * Parameters with default γ, σ and average aggregation, no region and no
 * constraints.
 */
ss_select_params ss_select_params_default(size_t range_start,
                                          size_t range_end,
                                          size_t k,
                                          double alpha,
                                          double beta);

/**
 * Selects salient frames of a dataset with pyramid-descriptor codes.
 */
ss_status ss_select(const ss_dataset *dataset, const ss_select_params *params, ss_selection **out);

/**
 * Selects `k` of `n` steps minimizing the summed cost of consecutive pairs
 * taken from the row-major `n × n` matrix `costs` (entry `i·n + j`, `i < j`).
 */
ss_status ss_select_with_costs(size_t n,
                               size_t k,
                               const double *costs,
                               const size_t *pinned,
                               size_t pinned_len,
                               const size_t *excluded,
                               size_t excluded_len,
                               ss_selection **out);

void ss_selection_free(ss_selection *selection);

/**
 * Number of selected steps; 0 for a null handle.
 */
size_t ss_selection_len(const ss_selection *selection);

/**
 * Selected frame indices, ascending; valid while the handle lives.
 */
const size_t *ss_selection_steps(const ss_selection *selection);

/**
 * Summed pair cost of the selection; NaN for a null handle.
 */
double ss_selection_total_cost(const ss_selection *selection);

/**
 * Structural cost of a cosine similarity in [-1, 1].
 */
double ss_structural_cost(double similarity);

/**
 * Statistical cost of two normalized aggregates; NaN inputs give 1.
 */
double ss_statistical_cost(double a, double b);

/**
 * Distance cost of steps `i`, `j` in a range of `n` frames selecting `k`.
 */
double ss_distance_cost(size_t i, size_t j, size_t n, size_t k, double gamma, double sigma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEPSELECT_H */
