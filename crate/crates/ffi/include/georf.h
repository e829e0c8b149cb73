#ifndef GEORF_H
#define GEORF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeorfStatus {
  GEORF_STATUS_OK = 0,
  GEORF_STATUS_NULL_POINTER = 1,
  GEORF_STATUS_INVALID_ARGUMENT = 2,
  GEORF_STATUS_DATA_ERROR = 3,
  GEORF_STATUS_IO_ERROR = 4,
  GEORF_STATUS_MODEL_FORMAT = 5,
  GEORF_STATUS_NOT_FITTED = 6,
  GEORF_STATUS_PANIC = 7,
} GeorfStatus;

typedef enum GeorfMtryKind {
  GEORF_MTRY_KIND_ALL = 0,
  GEORF_MTRY_KIND_THIRD = 1,
  GEORF_MTRY_KIND_SQRT = 2,
  /**
   * Use `mtry_value` features per split.
   */
  GEORF_MTRY_KIND_FIXED = 3,
} GeorfMtryKind;

/**
 * Opaque dataset handle.
 */
typedef struct GeorfDataset GeorfDataset;

/**
 * Opaque fitted-model handle.
 */
typedef struct GeorfModel GeorfModel;

/**
 * Model settings. Fill with [`georf_config_default`] then adjust.
 */
typedef struct GeorfConfig {
  size_t ntree;
  enum GeorfMtryKind mtry_kind;
  size_t mtry_value;
  size_t bandwidth;
  double local_weight;
  bool enable_i1;
  bool enable_i2;
  bool enable_i3;
  uint64_t base_seed;
  size_t min_leaf_size;
  bool include_anchor;
  double significance;
  /**
   * 0 uses every core.
   */
  size_t workers;
} GeorfConfig;

typedef struct GeorfMoran {
  size_t k;
  double moran_i;
  double expected_i;
  double variance;
  double z_score;
  double p_value;
} GeorfMoran;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *georf_version(void);

/**
 * Message of the last failed call on this thread, or "" after a success.
 * The pointer stays valid until the next georf call on the same thread.
 */
const char *georf_last_error_message(void);

/**
 * # Safety
 * `out` must point to writable memory for one `GeorfConfig`.
 */
enum GeorfStatus georf_config_default(struct GeorfConfig *out);

/**
 * Build a dataset from a row-major `n_rows x n_features` feature matrix,
 * a target vector and coordinate vectors. Features are named `x1..xS`.
 *
 * # Safety
 * Every array must hold the stated number of values; `out` must be writable.
 */
enum GeorfStatus georf_dataset_new(const double *features,
                                   size_t n_rows,
                                   size_t n_features,
                                   const double *target,
                                   const double *x,
                                   const double *y,
                                   struct GeorfDataset **out);

/**
 * Load a CSV file. `features` is an array of `n_features` column names.
 *
 * # Safety
 * All strings must be NUL-terminated; `features` must hold `n_features` pointers.
 */
enum GeorfStatus georf_dataset_load_csv(const char *path,
                                        const char *const *features,
                                        size_t n_features,
                                        const char *target,
                                        const char *x,
                                        const char *y,
                                        struct GeorfDataset **out);

/**
 * # Safety
 * `data` must come from a georf dataset constructor.
 */
enum GeorfStatus georf_dataset_shape(const struct GeorfDataset *data,
                                     size_t *n_rows,
                                     size_t *n_features);

/**
 * Release a dataset. Null is ignored.
 *
 * # Safety
 * `data` must be null or an unreleased handle.
 */
void georf_dataset_free(struct GeorfDataset *data);

/**
 * # Safety
 * `data` and `config` must be valid; `out` must be writable.
 */
enum GeorfStatus georf_model_fit(const struct GeorfDataset *data,
                                 const struct GeorfConfig *config,
                                 struct GeorfModel **out);

/**
 * Predict one point. Any of the three outputs may be null.
 *
 * # Safety
 * `features` must hold `n_features` values.
 */
enum GeorfStatus georf_model_predict(const struct GeorfModel *model,
                                     double x,
                                     double y,
                                     const double *features,
                                     size_t n_features,
                                     double *combined,
                                     double *local,
                                     double *global);

/**
 * Predict `n` points. `features` is row-major with the model's feature count.
 * `local` and `global` may be null.
 *
 * # Safety
 * Arrays must hold `n` values (features: `n * n_features`).
 */
enum GeorfStatus georf_model_predict_batch(const struct GeorfModel *model,
                                           size_t n,
                                           const double *x,
                                           const double *y,
                                           const double *features,
                                           double *combined,
                                           double *local,
                                           double *global);

/**
 * # Safety
 * `path` must be NUL-terminated.
 */
enum GeorfStatus georf_model_save(const struct GeorfModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum GeorfStatus georf_model_load(const char *path, struct GeorfModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or an unreleased handle.
 */
void georf_model_free(struct GeorfModel *model);

/**
 * Feature count, number of local models, and the bandwidth and local weight
 * in effect (after autocorrelation-based selection, if enabled).
 *
 * # Safety
 * `model` must be valid; null outputs are skipped.
 */
enum GeorfStatus georf_model_info(const struct GeorfModel *model,
                                  size_t *n_features,
                                  size_t *n_local_models,
                                  size_t *bandwidth,
                                  double *local_weight);

/**
 * Normalised global importance into `out[0..len]`; `len` must equal the feature count.
 *
 * # Safety
 * `out` must hold `len` values.
 */
enum GeorfStatus georf_model_global_importance(const struct GeorfModel *model,
                                               double *out,
                                               size_t len);

/**
 * Importance of the local model at training row `index`.
 *
 * # Safety
 * `out` must hold `len` values.
 */
enum GeorfStatus georf_model_local_importance(const struct GeorfModel *model,
                                              size_t index,
                                              double *out,
                                              size_t len);

/**
 * Moran's I of `values` with row-standardised `k`-nearest-neighbour weights.
 *
 * # Safety
 * Arrays must hold `n` values; `out` must be writable.
 */
enum GeorfStatus georf_morans_i(const double *x,
                                const double *y,
                                const double *values,
                                size_t n,
                                size_t k,
                                struct GeorfMoran *out);

/**
 * Scan Moran's I for `k = k_min, k_min + k_step, ..., <= k_max`. Passing 0
 * for `k_min` or `k_max` uses the default range. Writes the selected
 * bandwidth and local weight; `results`, if not null, receives one entry per
 * grid value and must hold `results_len` entries (see `n_results`).
 *
 * # Safety
 * Arrays must hold `n` values; outputs must be writable.
 */
enum GeorfStatus georf_isa_scan(const double *x,
                                const double *y,
                                const double *values,
                                size_t n,
                                size_t k_min,
                                size_t k_max,
                                size_t k_step,
                                double significance,
                                size_t *selected_lambda,
                                double *selected_alpha,
                                struct GeorfMoran *results,
                                size_t results_len,
                                size_t *n_results);

/**
 * # Safety
 * Both arrays must hold `n` values.
 */
enum GeorfStatus georf_r_squared(const double *y, const double *yhat, size_t n, double *out);

/**
 * # Safety
 * Both arrays must hold `n` values.
 */
enum GeorfStatus georf_rmse(const double *y, const double *yhat, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEORF_H */
