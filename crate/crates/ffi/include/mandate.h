#ifndef MANDATE_H
#define MANDATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MandateStatus {
  MANDATE_STATUS_OK = 0,
  MANDATE_STATUS_NULL_ARGUMENT = 1,
  MANDATE_STATUS_INVALID_ARGUMENT = 2,
  MANDATE_STATUS_IO_ERROR = 3,
  MANDATE_STATUS_DATA_ERROR = 4,
  MANDATE_STATUS_NUMERIC_ERROR = 5,
  MANDATE_STATUS_BUFFER_TOO_SMALL = 6,
  MANDATE_STATUS_PANIC = 7,
} MandateStatus;

/**
 * A loaded multi-relation graph.
 */
typedef struct MandateGraph MandateGraph;

/**
 * A trained model.
 */
typedef struct MandateModel MandateModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * excluding the terminator, so a return value ≥ `len` means truncation.
 */
size_t mandate_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mandate_version(void);

/**
 * Load a dataset directory.
 */
enum MandateStatus mandate_graph_load(const char *path, struct MandateGraph **out);

/**
 * Generate a synthetic graph with `relations` relations; `homophily`
 * points to `relations` values. Degree 10 per relation, 16 features,
 * feature signal 1.
 */
enum MandateStatus mandate_graph_synthetic(size_t nodes,
                                           size_t relations,
                                           const double *homophily,
                                           double fraud_rate,
                                           uint64_t seed,
                                           struct MandateGraph **out);

/**
 * Write a graph in the on-disk dataset format.
 */
enum MandateStatus mandate_graph_save(const struct MandateGraph *graph, const char *path);

enum MandateStatus mandate_graph_num_nodes(const struct MandateGraph *graph, size_t *out);

enum MandateStatus mandate_graph_num_relations(const struct MandateGraph *graph, size_t *out);

enum MandateStatus mandate_graph_feature_dim(const struct MandateGraph *graph, size_t *out);

/**
 * Edge homophily of one relation over edges with both ends labeled.
 */
enum MandateStatus mandate_graph_homophily(const struct MandateGraph *graph,
                                           size_t relation,
                                           double *out);

/**
 * Release a graph. Null is ignored.
 */
void mandate_graph_free(struct MandateGraph *graph);

/**
 * Load a checkpoint directory written by training.
 */
enum MandateStatus mandate_model_load(const char *path, struct MandateModel **out);

/**
 * Train on `graph` with a flat `key = value` config (may be null for
 * defaults), write run artifacts under `out_dir` and return the best
 * model.
 */
enum MandateStatus mandate_train(const struct MandateGraph *graph,
                                 const char *config,
                                 const char *out_dir,
                                 struct MandateModel **out);

/**
 * Fraud probability of every node of `graph`, written to `probs`
 * (`len` must be at least the node count).
 */
enum MandateStatus mandate_model_predict(const struct MandateModel *model,
                                         const struct MandateGraph *graph,
                                         double *probs,
                                         size_t len);

/**
 * Release a model. Null is ignored.
 */
void mandate_model_free(struct MandateModel *model);

/**
 * ROC AUC of `scores` against 0/1 `labels` (nonzero means fraud).
 */
enum MandateStatus mandate_auc(const double *scores,
                               const uint8_t *labels,
                               size_t len,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MANDATE_H */
