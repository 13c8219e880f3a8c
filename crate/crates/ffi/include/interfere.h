/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef INTERFERE_H
#define INTERFERE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InterfereStatus {
  INTERFERE_STATUS_OK = 0,
  INTERFERE_STATUS_NULL_POINTER = 1,
  INTERFERE_STATUS_INVALID_UTF8 = 2,
  INTERFERE_STATUS_PARSE_ERROR = 3,
  INTERFERE_STATUS_INVALID_INPUT = 4,
  INTERFERE_STATUS_NOT_FOUND = 5,
  INTERFERE_STATUS_INTERNAL = 6,
} InterfereStatus;

/**
 * Symmetric task-pair slowdown matrix.
 */
typedef struct InterfereMatrix InterfereMatrix;

/**
 * Platform resource graph.
 */
typedef struct InterfereModel InterfereModel;

/**
 * cgroup v2 isolation plan.
 */
typedef struct InterferePlan InterferePlan;

/**
 * Outcome of one simulation run.
 */
typedef struct InterfereSimResult InterfereSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Release with
 * `interfere_string_free`.
 */
char *interfere_last_error_message(void);

void interfere_string_free(char *s);

enum InterfereStatus interfere_model_from_json(const char *json, struct InterfereModel **out);

/**
 * The bundled Raspberry Pi 4 model.
 */
enum InterfereStatus interfere_model_rpi4(struct InterfereModel **out);

void interfere_model_free(struct InterfereModel *model);

/**
 * Number of diagnostics; zero means the model is well formed.
 */
enum InterfereStatus interfere_model_validate(const struct InterfereModel *model,
                                              size_t *out_count);

/**
 * Pairwise verdicts as a JSON array. `initiators` is a comma-separated id
 * list or null for all; `target` is null for every target. With `cross`,
 * only pairs whose initiators differ are reported.
 */
enum InterfereStatus interfere_model_channels_json(const struct InterfereModel *model,
                                                   const char *initiators,
                                                   const char *target,
                                                   bool cross,
                                                   char **out_json);

enum InterfereStatus interfere_matrix_from_json(const char *json, struct InterfereMatrix **out);

void interfere_matrix_free(struct InterfereMatrix *matrix);

enum InterfereStatus interfere_matrix_size(const struct InterfereMatrix *matrix, size_t *out_size);

/**
 * Entry for the task pair `(a, b)`.
 */
enum InterfereStatus interfere_matrix_get(const struct InterfereMatrix *matrix,
                                          const char *a,
                                          const char *b,
                                          double *out_value);

/**
 * Runs the planner over a task-set JSON document and `matrix`.
 */
enum InterfereStatus interfere_plan_build(const char *tasks_json,
                                          const struct InterfereMatrix *matrix,
                                          double theta,
                                          bool consolidate,
                                          struct InterferePlan **out);

enum InterfereStatus interfere_plan_from_json(const char *json, struct InterferePlan **out);

void interfere_plan_free(struct InterferePlan *plan);

enum InterfereStatus interfere_plan_to_json(const struct InterferePlan *plan, char **out_json);

enum InterfereStatus interfere_plan_verify(const struct InterferePlan *plan,
                                           const struct InterfereMatrix *matrix,
                                           double theta,
                                           bool *out_verified,
                                           size_t *out_violations);

enum InterfereStatus interfere_plan_emit_script(const struct InterferePlan *plan,
                                                const char *mount_point,
                                                char **out_script);

/**
 * Runs a scenario given as JSON. Relative file references resolve against
 * the working directory.
 */
enum InterfereStatus interfere_simulate_json(const char *scenario_json,
                                             struct InterfereSimResult **out);

void interfere_sim_result_free(struct InterfereSimResult *result);

enum InterfereStatus interfere_sim_miss_ratio(const struct InterfereSimResult *result,
                                              const char *task,
                                              uint64_t *out_misses,
                                              uint64_t *out_jobs);

/**
 * Per-job CSV with columns `task,job,release_ms,completion_ms,exec_ms,deadline_met`.
 */
enum InterfereStatus interfere_sim_export_csv(const struct InterfereSimResult *result,
                                              char **out_csv);

enum InterfereStatus interfere_compute_delta(double t_isolation,
                                             double t_interference,
                                             double *out_delta);

enum InterfereStatus interfere_rmlse(const double *predicted,
                                     const double *observed,
                                     size_t len,
                                     double *out_value);

/**
 * Total loss. `attention` holds per-region attention sums and `l2_counts`
 * raw per-region L2 access counts; both are normalized here.
 */
enum InterfereStatus interfere_total_loss(const double *predicted,
                                          const double *observed,
                                          size_t len,
                                          const double *attention,
                                          const double *l2_counts,
                                          size_t regions,
                                          double lambda,
                                          double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERFERE_H */
