#ifndef BHSNE_H
#define BHSNE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call. Values 1-3 match the command-line exit codes.
 */
typedef enum BhsneStatus {
  BHSNE_STATUS_OK = 0,
  /**
   * Bad argument or configuration value.
   */
  BHSNE_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Unreadable, malformed or invalid input data.
   */
  BHSNE_STATUS_DATA_ERROR = 2,
  /**
   * The optimization produced non-finite values.
   */
  BHSNE_STATUS_NUMERIC_ERROR = 3,
  /**
   * A required pointer was null.
   */
  BHSNE_STATUS_NULL_POINTER = 4,
  /**
   * An internal error was caught at the boundary.
   */
  BHSNE_STATUS_INTERNAL_ERROR = 5,
} BhsneStatus;

typedef enum BhsneAlgorithm {
  BHSNE_ALGORITHM_EXACT = 0,
  BHSNE_ALGORITHM_BARNES_HUT = 1,
  BHSNE_ALGORITHM_DUAL_TREE = 2,
} BhsneAlgorithm;

typedef enum BhsneCondition {
  BHSNE_CONDITION_STANDARD = 0,
  BHSNE_CONDITION_PAPER_LITERAL = 1,
} BhsneCondition;

/**
 * Run configuration; starts at the library defaults.
 */
typedef struct BhsneConfig BhsneConfig;

/**
 * Result of an embedding run.
 */
typedef struct BhsneEmbedding BhsneEmbedding;

/**
 * Input data matrix.
 */
typedef struct BhsneMatrix BhsneMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *bhsne_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bhsne_version(void);

/**
 * Copies `n * d` row-major values into a new matrix.
 *
 * # Safety
 * `values` must point to `n * d` readable doubles and `out` must be a valid
 * pointer to write the handle to.
 */
enum BhsneStatus bhsne_matrix_new(size_t n,
                                  size_t d,
                                  const double *values,
                                  struct BhsneMatrix **out);

/**
 * Loads a CSV (no label column) or binary matrix file, chosen by extension.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BhsneStatus bhsne_matrix_load(const char *path, struct BhsneMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library that has not been freed.
 */
void bhsne_matrix_free(struct BhsneMatrix *m);

/**
 * Number of rows, 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t bhsne_matrix_rows(const struct BhsneMatrix *m);

/**
 * Number of columns, 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t bhsne_matrix_cols(const struct BhsneMatrix *m);

/**
 * New configuration with default settings.
 */
struct BhsneConfig *bhsne_config_new(void);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
void bhsne_config_free(struct BhsneConfig *c);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_perplexity(struct BhsneConfig *c, double value);

/**
 * Barnes-Hut trade-off; 0 is exact.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_theta(struct BhsneConfig *c, double value);

/**
 * Dual-tree trade-off; 0 is exact.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_rho(struct BhsneConfig *c, double value);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_iterations(struct BhsneConfig *c, size_t value);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_learning_rate(struct BhsneConfig *c, double value);

/**
 * Early exaggeration factor.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_exaggeration(struct BhsneConfig *c, double value);

/**
 * Number of iterations with exaggerated affinities.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_exaggeration_iters(struct BhsneConfig *c, size_t value);

/**
 * Iteration at which momentum changes from 0.5 to 0.8.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_momentum_switch(struct BhsneConfig *c, size_t value);

/**
 * Output dimensionality, 2 or 3.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_output_dims(struct BhsneConfig *c, size_t value);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_seed(struct BhsneConfig *c, uint64_t value);

/**
 * PCA target dimensionality; 0 disables PCA.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_pca(struct BhsneConfig *c, size_t value);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_algorithm(struct BhsneConfig *c, enum BhsneAlgorithm value);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
enum BhsneStatus bhsne_config_set_condition(struct BhsneConfig *c, enum BhsneCondition value);

/**
 * Runs the full pipeline (PCA, affinities, optimization) on `data`.
 *
 * # Safety
 * `data` and `config` must be live handles and `out` a valid pointer.
 */
enum BhsneStatus bhsne_embed(const struct BhsneMatrix *data,
                             const struct BhsneConfig *config,
                             struct BhsneEmbedding **out);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
void bhsne_embedding_free(struct BhsneEmbedding *e);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
size_t bhsne_embedding_rows(const struct BhsneEmbedding *e);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
size_t bhsne_embedding_dims(const struct BhsneEmbedding *e);

/**
 * Row-major coordinates, valid while the handle lives; null for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
const double *bhsne_embedding_coords(const struct BhsneEmbedding *e);

/**
 * KL divergence at the end of the run; NaN for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
double bhsne_embedding_final_cost(const struct BhsneEmbedding *e);

/**
 * Wall-clock seconds spent in the pipeline; NaN for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
double bhsne_embedding_seconds(const struct BhsneEmbedding *e);

/**
 * Leave-one-out 1-nearest-neighbor label error of the embedding.
 *
 * # Safety
 * `e` must be a live handle, `labels` must point to one label per row, and
 * `out` must be a valid pointer.
 */
enum BhsneStatus bhsne_embedding_knn_error(const struct BhsneEmbedding *e,
                                           const int64_t *labels,
                                           size_t n_labels,
                                           double *out);

/**
 * Writes the embedding as CSV.
 *
 * # Safety
 * `e` must be a live handle and `path` a NUL-terminated string.
 */
enum BhsneStatus bhsne_embedding_write_csv(const struct BhsneEmbedding *e, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BHSNE_H */
