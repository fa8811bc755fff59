/* C interface for the qedcomm referential-game toolkit. */

#ifndef QEDCOMM_H
#define QEDCOMM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every qedcomm FFI call.
typedef enum QedcommStatus {
  QEDCOMM_STATUS_OK = 0,
  QEDCOMM_STATUS_NULL_POINTER = 1,
  QEDCOMM_STATUS_INVALID_ARGUMENT = 2,
  QEDCOMM_STATUS_BUFFER_TOO_SMALL = 3,
  QEDCOMM_STATUS_RUNTIME_ERROR = 4,
  QEDCOMM_STATUS_INTERNAL_PANIC = 5,
} QedcommStatus;

// Task kind selector for `qedcomm_task_build`.
typedef enum QedcommTaskKind {
  QEDCOMM_TASK_KIND_NO_DEGENERACY = 0,
  QEDCOMM_TASK_KIND_ENERGY_DEGENERACY = 1,
} QedcommTaskKind;

// Channel selector for `qedcomm_task_build`.
typedef enum QedcommChannel {
  QEDCOMM_CHANNEL_COSTLY = 0,
  QEDCOMM_CHANNEL_CHEAP_TALK = 1,
} QedcommChannel;

// Goal-distribution selector for `qedcomm_task_build`.
typedef enum QedcommGoalKind {
  QEDCOMM_GOAL_KIND_ZIPFIAN = 0,
  QEDCOMM_GOAL_KIND_UNIFORM = 1,
} QedcommGoalKind;

// Opaque joint-policy handle.
typedef struct QedcommPolicy QedcommPolicy;

// Opaque result handle for a discovery run.
typedef struct QedcommQedResult QedcommQedResult;

// Opaque task handle.
typedef struct QedcommTask QedcommTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Build one of the benchmark tasks. The returned handle must be released
// with `qedcomm_task_free`.
enum QedcommStatus qedcomm_task_build(enum QedcommTaskKind kind,
                                      enum QedcommChannel channel,
                                      enum QedcommGoalKind goal_kind,
                                      struct QedcommTask **out);

void qedcomm_task_free(struct QedcommTask *task);

enum QedcommStatus qedcomm_task_num_goals(const struct QedcommTask *task, size_t *out);

enum QedcommStatus qedcomm_task_num_actions(const struct QedcommTask *task, size_t *out);

// Copy the per-action cost vector into `buf` (length in elements).
enum QedcommStatus qedcomm_task_costs(const struct QedcommTask *task, double *buf, size_t len);

// Copy the goal probability vector into `buf` (length in elements).
enum QedcommStatus qedcomm_task_goal_probs(const struct QedcommTask *task, double *buf, size_t len);

// Train a self-play policy with the benchmark recipe. Pass 0 iterations
// for the task default (5000 or 10000).
enum QedcommStatus qedcomm_train_sp(const struct QedcommTask *task,
                                    uint64_t seed,
                                    uint32_t iterations,
                                    struct QedcommPolicy **out);

void qedcomm_policy_free(struct QedcommPolicy *policy);

// Self-play accuracy of a policy under the task's goal distribution.
enum QedcommStatus qedcomm_policy_accuracy(const struct QedcommPolicy *policy,
                                           const struct QedcommTask *task,
                                           double *out);

// Cross-play accuracy: sender of `sender_of` with receiver of
// `receiver_of`.
enum QedcommStatus qedcomm_crossplay_accuracy(const struct QedcommPolicy *sender_of,
                                              const struct QedcommPolicy *receiver_of,
                                              const struct QedcommTask *task,
                                              double *out);

// Row-major sender probability table, goals x actions.
enum QedcommStatus qedcomm_policy_sender_probs(const struct QedcommPolicy *policy,
                                               double *buf,
                                               size_t len);

// Row-major receiver probability table, actions x goals.
enum QedcommStatus qedcomm_policy_receiver_probs(const struct QedcommPolicy *policy,
                                                 double *buf,
                                                 size_t len);

// Row-major confusion matrix p(predicted | true), goals x goals.
enum QedcommStatus qedcomm_policy_confusion(const struct QedcommPolicy *policy,
                                            double *buf,
                                            size_t len);

// Run the full discovery loop with the benchmark recipe. Pass 0 for the
// default population of 10; populations below 2 are invalid.
enum QedcommStatus qedcomm_qed_run(const struct QedcommTask *task,
                                   uint64_t base_seed,
                                   uint32_t population,
                                   struct QedcommQedResult **out);

void qedcomm_qed_result_free(struct QedcommQedResult *result);

// Self-play and cross-play statistics of the final generation.
enum QedcommStatus qedcomm_qed_result_scores(const struct QedcommQedResult *result,
                                             double *sp_mean,
                                             double *sp_std,
                                             double *xp_mean,
                                             double *xp_std);

// Whether the run met the cross-play-matches-self-play stopping rule.
enum QedcommStatus qedcomm_qed_result_converged(const struct QedcommQedResult *result, bool *out);

// Number of equivalence maps in the final working set (including the
// identity).
enum QedcommStatus qedcomm_qed_result_mapping_count(const struct QedcommQedResult *result,
                                                    size_t *out);

// Number of completed outer iterations.
enum QedcommStatus qedcomm_qed_result_generations(const struct QedcommQedResult *result,
                                                  size_t *out);

// Clone the final policy out of a discovery result. The returned handle
// must be released with `qedcomm_policy_free`.
enum QedcommStatus qedcomm_qed_result_final_policy(const struct QedcommQedResult *result,
                                                   struct QedcommPolicy **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QEDCOMM_H */
