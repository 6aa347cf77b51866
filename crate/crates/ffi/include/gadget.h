#ifndef GADGET_H
#define GADGET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GadgetSelector {
  GADGET_SELECTOR_TOP = 0,
  GADGET_SELECTOR_GREEDY = 1,
  GADGET_SELECTOR_GREEDY_LITE = 2,
  GADGET_SELECTOR_BACK_FORTH = 3,
  GADGET_SELECTOR_OPT = 4,
} GadgetSelector;

typedef enum GadgetStatus {
  GADGET_STATUS_OK = 0,
  GADGET_STATUS_NULL_POINTER = 1,
  GADGET_STATUS_INVALID_ARGUMENT = 2,
  GADGET_STATUS_INVALID_DATA = 3,
  GADGET_STATUS_IO = 4,
  GADGET_STATUS_NUMERIC = 5,
  GADGET_STATUS_TOO_LARGE = 6,
  GADGET_STATUS_PANIC = 7,
} GadgetStatus;

/**
 * DAGs drawn by [`gadget_run`].
 */
typedef struct GadgetDagSet GadgetDagSet;

/**
 * A data matrix, samples by variables.
 */
typedef struct GadgetData GadgetData;

/**
 * Causal-effect matrices, one per DAG.
 */
typedef struct GadgetEffects GadgetEffects;

/**
 * Settings for [`gadget_run`]. Start from [`gadget_options_default`].
 */
typedef struct GadgetOptions {
  /**
   * Candidate parents per node; 0 picks min(12, n - 1).
   */
  size_t k;
  enum GadgetSelector selector;
  size_t lite_tail;
  size_t chains;
  size_t steps;
  double burn_in_fraction;
  size_t dags;
  uint64_t seed;
  /**
   * Nonzero to standardize the data before scoring.
   */
  int standardize;
} GadgetOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *gadget_last_error(void);

struct GadgetOptions gadget_options_default(void);

/**
 * Copies a row-major `n_samples x n_vars` array.
 *
 * # Safety
 * `values` must point to `n_samples * n_vars` doubles; `out` must be writable.
 */
enum GadgetStatus gadget_data_from_rows(const double *values,
                                        size_t n_samples,
                                        size_t n_vars,
                                        struct GadgetData **out);

/**
 * Reads a CSV file; `has_header` nonzero skips the first row.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GadgetStatus gadget_data_load_csv(const char *path, int has_header, struct GadgetData **out);

/**
 * # Safety
 * `data` must be a live handle or null; `n_vars` must be writable.
 */
enum GadgetStatus gadget_data_shape(const struct GadgetData *data,
                                    size_t *n_samples,
                                    size_t *n_vars);

/**
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void gadget_data_free(struct GadgetData *data);

/**
 * Selects candidates, runs the partition chain and draws `opts->dags` DAGs.
 *
 * # Safety
 * `data` and `opts` must be valid; `out` must be writable.
 */
enum GadgetStatus gadget_run(const struct GadgetData *data,
                             const struct GadgetOptions *opts,
                             struct GadgetDagSet **out);

/**
 * # Safety
 * `dags` must be a live handle; `count` and `n_nodes` must be writable.
 */
enum GadgetStatus gadget_dags_shape(const struct GadgetDagSet *dags,
                                    size_t *count,
                                    size_t *n_nodes);

/**
 * Writes DAG `index` as an `n x n` row-major 0/1 matrix, `adj[i * n + j] = 1` for `i -> j`.
 *
 * # Safety
 * `adj` must have room for `n * n` bytes.
 */
enum GadgetStatus gadget_dags_adjacency(const struct GadgetDagSet *dags,
                                        size_t index,
                                        uint8_t *adj);

/**
 * # Safety
 * `dags` must come from this library and not be used afterwards.
 */
void gadget_dags_free(struct GadgetDagSet *dags);

/**
 * Samples one effect matrix per DAG for a joint intervention on `intervene`
 * (empty for single-node effects).
 *
 * # Safety
 * `intervene` must point to `n_intervene` values (or be null when zero).
 */
enum GadgetStatus gadget_beeps(const struct GadgetData *data,
                               const struct GadgetDagSet *dags,
                               const size_t *intervene,
                               size_t n_intervene,
                               int standardize_data,
                               uint64_t seed,
                               struct GadgetEffects **out);

/**
 * # Safety
 * `effects` must be a live handle; `count` must be writable.
 */
enum GadgetStatus gadget_effects_count(const struct GadgetEffects *effects, size_t *count);

/**
 * Writes sample `index` row-major; entry `(i, j)` is the effect of `j` on `i`.
 *
 * # Safety
 * `out` must have room for `n * n` doubles.
 */
enum GadgetStatus gadget_effects_matrix(const struct GadgetEffects *effects,
                                        size_t index,
                                        double *out);

/**
 * Posterior mean effect matrix, row-major.
 *
 * # Safety
 * `out` must have room for `n * n` doubles.
 */
enum GadgetStatus gadget_effects_mean(const struct GadgetEffects *effects, double *out);

/**
 * # Safety
 * `effects` must come from this library and not be used afterwards.
 */
void gadget_effects_free(struct GadgetEffects *effects);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GADGET_H */
