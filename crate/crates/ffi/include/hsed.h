#ifndef HSED_H
#define HSED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsedManifold {
  HSED_MANIFOLD_POINCARE = 0,
  HSED_MANIFOLD_HYPERBOLOID = 1,
  HSED_MANIFOLD_EUCLIDEAN = 2,
} HsedManifold;

typedef enum HsedStatus {
  HSED_STATUS_OK = 0,
  HSED_STATUS_INVALID_ARGUMENT = 1,
  HSED_STATUS_DOMAIN = 2,
  HSED_STATUS_NON_FINITE = 3,
  HSED_STATUS_PARSE = 4,
  HSED_STATUS_DUPLICATE_ID = 5,
  HSED_STATUS_IO = 6,
  HSED_STATUS_JSON = 7,
  HSED_STATUS_NULL_POINTER = 8,
  HSED_STATUS_UTF8 = 9,
  HSED_STATUS_PANIC = 10,
} HsedStatus;

/**
 * Opaque run configuration.
 */
typedef struct HsedConfig HsedConfig;

/**
 * Opaque message graph.
 */
typedef struct HsedGraph HsedGraph;

/**
 * Evaluation metrics, mirrored field for field.
 */
typedef struct HsedReport {
  double acc;
  double nmi;
  double ami;
  double ari;
  double micro_f1;
  double macro_f1;
  double wall_seconds;
} HsedReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *hsed_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hsed_version(void);

/**
 * Reads a graph file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HsedStatus hsed_graph_read(const char *path, struct HsedGraph **out);

/**
 * Generates a labelled synthetic tree.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HsedStatus hsed_graph_synth_tree(size_t branching,
                                      size_t depth,
                                      double feature_noise,
                                      size_t feature_dim,
                                      uint64_t seed,
                                      struct HsedGraph **out);

/**
 * Writes a graph file.
 *
 * # Safety
 * `graph` must come from this library; `path` must be NUL-terminated.
 */
enum HsedStatus hsed_graph_write(const struct HsedGraph *graph, const char *path);

/**
 * Releases a graph. NULL is ignored.
 *
 * # Safety
 * `graph` must come from this library and not be used afterwards.
 */
void hsed_graph_free(struct HsedGraph *graph);

/**
 * Node, edge, feature and class counts. Any output pointer may be NULL.
 *
 * # Safety
 * `graph` must come from this library; non-NULL outputs must be valid.
 */
enum HsedStatus hsed_graph_shape(const struct HsedGraph *graph,
                                 size_t *num_nodes,
                                 size_t *num_edges,
                                 size_t *feature_dim,
                                 size_t *num_classes);

/**
 * The default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HsedStatus hsed_config_default(struct HsedConfig **out);

/**
 * Parses `key = value` configuration text.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid pointer.
 */
enum HsedStatus hsed_config_parse(const char *text, struct HsedConfig **out);

/**
 * Releases a configuration. NULL is ignored.
 *
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void hsed_config_free(struct HsedConfig *config);

/**
 * Trains the configured pipeline on `graph` and fills `report` with the
 * test-split metrics. The graph must be labelled.
 *
 * # Safety
 * Handles must come from this library; `report` must be valid.
 */
enum HsedStatus hsed_train(const struct HsedGraph *graph,
                           const struct HsedConfig *config,
                           struct HsedReport *report);

/**
 * Metrics for two labelings of length `n`.
 *
 * # Safety
 * `truth` and `predicted` must point to `n` values; `report` must be valid.
 */
enum HsedStatus hsed_metrics(const size_t *truth,
                             const size_t *predicted,
                             size_t n,
                             struct HsedReport *report);

/**
 * Geodesic distance between two points of length `len` (ambient
 * coordinates, so `d+1` on the hyperboloid).
 *
 * # Safety
 * `a` and `b` must point to `len` values; `out` must be valid.
 */
enum HsedStatus hsed_distance(enum HsedManifold manifold,
                              double curvature,
                              const double *a,
                              const double *b,
                              size_t len,
                              double *out);

/**
 * Exponential map at the origin. `v` has `len` entries; `out` must hold
 * `len` entries (`len` ambient entries on the hyperboloid, with `v[0] = 0`).
 *
 * # Safety
 * `v` and `out` must point to `len` values.
 */
enum HsedStatus hsed_exp_map_origin(enum HsedManifold manifold,
                                    double curvature,
                                    const double *v,
                                    size_t len,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSED_H */
