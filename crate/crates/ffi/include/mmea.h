#ifndef MMEA_H
#define MMEA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmeaStatus {
  MMEA_STATUS_OK = 0,
  MMEA_STATUS_NULL_POINTER = 1,
  MMEA_STATUS_INVALID_ARGUMENT = 2,
  MMEA_STATUS_IO = 3,
  MMEA_STATUS_PARSE = 4,
  MMEA_STATUS_FORMAT = 5,
  MMEA_STATUS_DIMENSION = 6,
  MMEA_STATUS_NON_FINITE = 7,
  MMEA_STATUS_UNAVAILABLE = 8,
  MMEA_STATUS_CONFIG = 9,
  MMEA_STATUS_INTERNAL = 10,
  MMEA_STATUS_PANIC = 11,
} MmeaStatus;

/**
 * Pipeline configuration handle.
 */
typedef struct MmeaConfig MmeaConfig;

/**
 * Loaded knowledge-graph pair with its feature tables.
 */
typedef struct MmeaDataset MmeaDataset;

/**
 * Result of one alignment run.
 */
typedef struct MmeaRun MmeaRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *mmea_last_error(void);

/**
 * # Safety
 * `s` must come from a function of this library that returns an owned string,
 * and must not be used afterwards.
 */
void mmea_string_free(char *s);

/**
 * New configuration with default values.
 */
struct MmeaConfig *mmea_config_new(void);

/**
 * # Safety
 * `cfg` must be null or a handle from [`mmea_config_new`] not yet freed.
 */
void mmea_config_free(struct MmeaConfig *cfg);

/**
 * Sets an integer option: `sinkhorn_k`, `refine_rounds`, `hops`,
 * `max_images`, `embed_dim` or `global_seed`.
 *
 * # Safety
 * `cfg` must be a live config handle and `key` a NUL-terminated string.
 */
enum MmeaStatus mmea_config_set_int(struct MmeaConfig *cfg, const char *key, uint64_t value);

/**
 * Sets a boolean option: `prescale`, `cosine`, `accept_pseudo` or `holdout_test`.
 *
 * # Safety
 * `cfg` must be a live config handle and `key` a NUL-terminated string.
 */
enum MmeaStatus mmea_config_set_flag(struct MmeaConfig *cfg, const char *key, bool value);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum MmeaStatus mmea_config_set_epsilon(struct MmeaConfig *cfg, double epsilon);

/**
 * Replaces the enabled modalities with a comma list such as `rel,vis,attr,time`.
 *
 * # Safety
 * `cfg` must be a live config handle and `list` a NUL-terminated string.
 */
enum MmeaStatus mmea_config_set_modalities(struct MmeaConfig *cfg, const char *list);

/**
 * Loads a dataset directory. On success `*out` receives a new handle.
 *
 * # Safety
 * `dir` must be a NUL-terminated path, `cfg` a live config handle and `out`
 * a writable pointer.
 */
enum MmeaStatus mmea_dataset_load(const char *dir,
                                  const struct MmeaConfig *cfg,
                                  struct MmeaDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from [`mmea_dataset_load`] not yet freed.
 */
void mmea_dataset_free(struct MmeaDataset *ds);

/**
 * Entity counts of the source and target graphs.
 *
 * # Safety
 * `ds` must be a live dataset handle; the out pointers must be writable.
 */
enum MmeaStatus mmea_dataset_entities(const struct MmeaDataset *ds,
                                      size_t *n_source,
                                      size_t *n_target);

/**
 * Runs the full alignment pipeline. Evaluation against the dataset's test
 * seeds is included when they exist.
 *
 * # Safety
 * `ds` and `cfg` must be live handles and `out` a writable pointer.
 */
enum MmeaStatus mmea_align(const struct MmeaDataset *ds,
                           const struct MmeaConfig *cfg,
                           bool unsupervised,
                           struct MmeaRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`mmea_align`] not yet freed.
 */
void mmea_run_free(struct MmeaRun *run);

/**
 * Shape of the fused score matrix.
 *
 * # Safety
 * `run` must be a live run handle; the out pointers must be writable.
 */
enum MmeaStatus mmea_run_shape(const struct MmeaRun *run, size_t *rows, size_t *cols);

/**
 * Copies the fused score matrix, row-major, into `buf` of `len` doubles.
 * `len` must equal rows × cols.
 *
 * # Safety
 * `run` must be a live run handle and `buf` valid for `len` writes.
 */
enum MmeaStatus mmea_run_scores(const struct MmeaRun *run, double *buf, size_t len);

/**
 * Number of predicted pairs.
 *
 * # Safety
 * `run` must be a live run handle and `n` writable.
 */
enum MmeaStatus mmea_run_prediction_count(const struct MmeaRun *run, size_t *n);

/**
 * Predicted pair `index`, ordered by source entity.
 *
 * # Safety
 * `run` must be a live run handle; the out pointers must be writable.
 */
enum MmeaStatus mmea_run_prediction(const struct MmeaRun *run,
                                    size_t index,
                                    size_t *src,
                                    size_t *tgt,
                                    double *score);

/**
 * Metrics of the run. Fails with `Unavailable` when the dataset had no test seeds.
 *
 * `hits_n` / `hits` hold `n_hits` cutoffs and receive the matching Hits@N;
 * a cutoff not computed by the run yields `Unavailable`.
 *
 * # Safety
 * `run` must be a live run handle; arrays must hold `n_hits` elements; the
 * scalar out pointers must be writable.
 */
enum MmeaStatus mmea_run_metrics(const struct MmeaRun *run,
                                 const size_t *hits_n,
                                 double *hits,
                                 size_t n_hits,
                                 double *mrr,
                                 double *mr);

/**
 * Metrics as a JSON string owned by the caller (free with [`mmea_string_free`]).
 *
 * # Safety
 * `run` must be a live run handle and `out` writable.
 */
enum MmeaStatus mmea_run_metrics_json(const struct MmeaRun *run, char **out);

/**
 * Sinkhorn rescaling of a row-major `rows × cols` matrix into `out`.
 *
 * # Safety
 * `data` and `out` must each be valid for `rows * cols` doubles; they may alias.
 */
enum MmeaStatus mmea_sinkhorn(const double *data, size_t rows, size_t cols, size_t k, double *out);

/**
 * Hits@N, MRR and MR of a row-major score matrix against `n_gold` gold pairs.
 *
 * # Safety
 * `scores` must hold `rows * cols` doubles, `gold_src` / `gold_tgt` hold
 * `n_gold` indices, `hits_n` / `hits` hold `n_hits` elements, and the scalar
 * out pointers must be writable.
 */
enum MmeaStatus mmea_evaluate(const double *scores,
                              size_t rows,
                              size_t cols,
                              const size_t *gold_src,
                              const size_t *gold_tgt,
                              size_t n_gold,
                              const size_t *hits_n,
                              double *hits,
                              size_t n_hits,
                              double *mrr,
                              double *mr);

/**
 * Writes a synthetic dataset pair into `dir` using default generator
 * settings apart from the given ones.
 *
 * # Safety
 * `dir` must be a NUL-terminated path.
 */
enum MmeaStatus mmea_synth_generate(const char *dir,
                                    size_t n_entities,
                                    double perturbation,
                                    double feat_noise_sigma,
                                    double seed_ratio,
                                    uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMEA_H */
