#ifndef THZ_JCS_H
#define THZ_JCS_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum ThzStatus {
  THZ_STATUS_OK = 0,
  THZ_STATUS_NULL_POINTER = 1,
  /**
   * Malformed UTF-8 or JSON, or an out-of-range argument.
   */
  THZ_STATUS_INVALID_ARGUMENT = 2,
  THZ_STATUS_DOMAIN = 3,
  THZ_STATUS_INVALID_ASSIGNMENT = 4,
  THZ_STATUS_BUDGET_EXCEEDED = 5,
  THZ_STATUS_SHAPE = 6,
  THZ_STATUS_CONTRACT = 7,
  THZ_STATUS_IO = 8,
  THZ_STATUS_CONFIG = 9,
  THZ_STATUS_DIVERGENCE = 10,
  THZ_STATUS_GENERATION = 11,
  THZ_STATUS_INGEST = 12,
  /**
   * A Rust panic was caught at the boundary.
   */
  THZ_STATUS_PANIC = 13,
} ThzStatus;

/**
 * A trained GNN checkpoint.
 */
typedef struct ThzModel ThzModel;

/**
 * Physical parameters plus graph construction options.
 */
typedef struct ThzParams ThzParams;

/**
 * The output of a solver.
 */
typedef struct ThzSolveResult ThzSolveResult;

/**
 * A vehicle snapshot.
 */
typedef struct ThzTopology ThzTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *thz_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void thz_string_free(char *s);

/**
 * Default physical parameters and graph options.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum ThzStatus thz_params_default(struct ThzParams **out);

/**
 * Parses parameters from JSON. Missing fields take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ThzStatus thz_params_from_json(const char *json, struct ThzParams **out);

/**
 * # Safety
 * `params` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_params_to_json(const struct ThzParams *params, char **out);

/**
 * # Safety
 * `params` must be null or a handle not yet freed.
 */
void thz_params_free(struct ThzParams *params);

/**
 * Draws a random topology with the default region, power and antenna.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ThzStatus thz_topology_generate(uint64_t seed,
                                     size_t spv,
                                     size_t comm,
                                     size_t sense,
                                     struct ThzTopology **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ThzStatus thz_topology_from_json(const char *json, struct ThzTopology **out);

/**
 * # Safety
 * `topology` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_topology_to_json(const struct ThzTopology *topology, char **out);

/**
 * Writes the SPV, communication-target and sensing-target counts.
 *
 * # Safety
 * `topology` must be a live handle; the outputs valid pointers.
 */
enum ThzStatus thz_topology_counts(const struct ThzTopology *topology,
                                   size_t *spv,
                                   size_t *comm,
                                   size_t *sense);

/**
 * # Safety
 * `topology` must be null or a handle not yet freed.
 */
void thz_topology_free(struct ThzTopology *topology);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ThzStatus thz_model_load(const char *path, struct ThzModel **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ThzStatus thz_model_from_json(const char *json, struct ThzModel **out);

/**
 * Number of targets L the model was trained for.
 *
 * # Safety
 * `model` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_model_target_count(const struct ThzModel *model, size_t *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void thz_model_free(struct ThzModel *model);

/**
 * Exhaustive sum-rate oracle. Fails with `BudgetExceeded` when K^L
 * exceeds `budget`.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum ThzStatus thz_enumerate_optimal(const struct ThzTopology *topology,
                                     const struct ThzParams *params,
                                     uint64_t budget,
                                     struct ThzSolveResult **out);

/**
 * GNN probabilities followed by the exact surrogate solver.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum ThzStatus thz_decide(const struct ThzTopology *topology,
                          const struct ThzModel *model,
                          const struct ThzParams *params,
                          uint64_t seed,
                          struct ThzSolveResult **out);

/**
 * Greedy strongest-signal association from locations only.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum ThzStatus thz_baseline_location(const struct ThzTopology *topology,
                                     const struct ThzParams *params,
                                     struct ThzSolveResult **out);

/**
 * Sum rate of the returned assignment, bit/s.
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_result_objective(const struct ThzSolveResult *result, double *out);

/**
 * Whether every sensing link meets the minimum SINR.
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_result_feasible(const struct ThzSolveResult *result, bool *out);

/**
 * SPV slot serving target slot `target` (communication targets first),
 * or -1 when unserved.
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_result_server(const struct ThzSolveResult *result, size_t target, int64_t *out);

/**
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum ThzStatus thz_result_to_json(const struct ThzSolveResult *result, char **out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void thz_result_free(struct ThzSolveResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THZ_JCS_H */
