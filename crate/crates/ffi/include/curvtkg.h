#ifndef CURVTKG_H
#define CURVTKG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this API.
 */
typedef enum CurvtkgStatus {
  CurvtkgOk = 0,
  /**
   * A required pointer argument was null.
   */
  CurvtkgNullArgument = 1,
  /**
   * An argument value was rejected (bad config key, id out of range).
   */
  CurvtkgInvalidArgument = 2,
  /**
   * Files were missing, malformed, or otherwise unreadable.
   */
  CurvtkgDataError = 3,
  /**
   * A numerical failure (non-finite loss or scores).
   */
  CurvtkgNumericError = 4,
} CurvtkgStatus;

/**
 * Opaque dataset handle: id-mapped quadruple splits plus statistics.
 */
typedef struct CurvtkgDataset CurvtkgDataset;

/**
 * Opaque model handle: parameters plus training configuration.
 */
typedef struct CurvtkgModel CurvtkgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *curvtkg_version(void);

/**
 * Message for the most recent failure on this thread; empty when the
 * last call succeeded. The pointer stays valid until the next failing
 * call on the same thread.
 */
const char *curvtkg_last_error(void);

/**
 * Load a dataset from a bundle file, a directory containing
 * `bundle.bin`, or a directory of raw tab-separated splits. Nonzero
 * `event_intervals` reads the 4th column as a single event time instead
 * of expanding `[t_start, t_end]` ranges.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid
 * pointer. On success `*out` owns the dataset until
 * `curvtkg_dataset_free`.
 */
enum CurvtkgStatus curvtkg_dataset_load(const char *path,
                                        int32_t event_intervals,
                                        struct CurvtkgDataset **out);

/**
 * Basic counts and the mean hierarchy score over nonempty snapshots.
 * Null output pointers are skipped.
 *
 * # Safety
 * `ds` must come from `curvtkg_dataset_load`; output pointers must be
 * null or valid.
 */
enum CurvtkgStatus curvtkg_dataset_stats(const struct CurvtkgDataset *ds,
                                         uint64_t *entities,
                                         uint64_t *relations,
                                         uint64_t *timestamps,
                                         uint64_t *facts,
                                         double *mean_khs);

/**
 * # Safety
 * `ds` must be null or a pointer from `curvtkg_dataset_load`, passed
 * at most once.
 */
void curvtkg_dataset_free(struct CurvtkgDataset *ds);

/**
 * Train a fresh model on the dataset's training split. `config` is an
 * optional NUL-terminated string of `key = value` lines with the same
 * keys as the CLI config file; null means defaults. `seed` drives
 * initialization and shuffling.
 *
 * # Safety
 * `ds` must come from `curvtkg_dataset_load`; `config` must be null or
 * NUL-terminated; `out` must be valid. On success `*out` owns the
 * model until `curvtkg_model_free`.
 */
enum CurvtkgStatus curvtkg_model_train(const struct CurvtkgDataset *ds,
                                       const char *config,
                                       uint64_t seed,
                                       struct CurvtkgModel **out);

/**
 * # Safety
 * `model` must come from this API; `path` must be NUL-terminated.
 */
enum CurvtkgStatus curvtkg_model_save(const struct CurvtkgModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid. On success
 * `*out` owns the model until `curvtkg_model_free`.
 */
enum CurvtkgStatus curvtkg_model_load(const char *path, struct CurvtkgModel **out);

/**
 * Filtered link-prediction metrics on the dataset's test split.
 * Nonzero `oracle_history` conditions later test timestamps on ground
 * truth; zero samples intermediate snapshots instead. Null output
 * pointers are skipped.
 *
 * # Safety
 * `model` and `ds` must come from this API; output pointers must be
 * null or valid.
 */
enum CurvtkgStatus curvtkg_model_evaluate(const struct CurvtkgModel *model,
                                          const struct CurvtkgDataset *ds,
                                          int32_t oracle_history,
                                          uint64_t seed,
                                          double *mrr,
                                          double *hits1,
                                          double *hits3,
                                          double *hits10);

/**
 * Object scores for the query `(subject, relation, ?, t)`, written to
 * `scores[0..len]` where `len` must equal the entity count. History
 * before `t` comes from the train and validation splits; timestamps
 * past their horizon are filled with sampled snapshots seeded by
 * `seed`.
 *
 * # Safety
 * `model` and `ds` must come from this API; `scores` must point to at
 * least `len` doubles.
 */
enum CurvtkgStatus curvtkg_model_score_objects(const struct CurvtkgModel *model,
                                               const struct CurvtkgDataset *ds,
                                               uint32_t subject,
                                               uint32_t relation,
                                               uint32_t t,
                                               uint64_t seed,
                                               double *scores,
                                               uintptr_t len);

/**
 * # Safety
 * `model` must be null or a pointer from this API, passed at most once.
 */
void curvtkg_model_free(struct CurvtkgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CURVTKG_H */
