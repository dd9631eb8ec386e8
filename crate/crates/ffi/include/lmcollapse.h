#ifndef LMCOLLAPSE_H
#define LMCOLLAPSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LmcParadigmKind {
  LmcParadigmKind_Replace = 0,
  LmcParadigmKind_Accumulate = 1,
} LmcParadigmKind;

typedef enum LmcStatus {
  LmcStatus_Ok = 0,
  LmcStatus_NullPointer = 1,
  LmcStatus_InvalidArgument = 2,
  LmcStatus_Io = 3,
  LmcStatus_Parse = 4,
  LmcStatus_UnknownToken = 5,
  /**
   * A decomposition or ratio is undefined for the given numbers.
   */
  LmcStatus_Numeric = 6,
  LmcStatus_ScheduleExhausted = 7,
  LmcStatus_Panic = 8,
} LmcStatus;

typedef struct LmcModel LmcModel;

typedef struct LmcSchedule LmcSchedule;

typedef struct LmcTrajectory LmcTrajectory;

/**
 * `k` is read only for `Accumulate`.
 */
typedef struct LmcParadigm {
  enum LmcParadigmKind kind;
  double k;
} LmcParadigm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lmc_version(void);

/**
 * Message for the last failed call on this thread, or "" after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *lmc_last_error(void);

/**
 * # Safety
 * `path` is a NUL-terminated string; `model` is writable.
 */
enum LmcStatus lmc_model_load(const char *path, struct LmcModel **model);

/**
 * # Safety
 * `model` is null or came from `lmc_model_load` and was not freed.
 */
void lmc_model_free(struct LmcModel *model);

/**
 * Vocabulary size including BOS (id 0); 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
uintptr_t lmc_model_vocab_size(const struct LmcModel *model);

/**
 * # Safety
 * `model` is a live handle, `label` a NUL-terminated string, `id` writable.
 */
enum LmcStatus lmc_model_token_id(const struct LmcModel *model, const char *label, uint32_t *id);

/**
 * `p(token | context)` with `context` given as token ids, oldest first.
 *
 * # Safety
 * `context` points to `context_len` ids (may be null when 0); `prob` is writable.
 */
enum LmcStatus lmc_model_prob(const struct LmcModel *model,
                              const uint32_t *context,
                              uintptr_t context_len,
                              uint32_t token,
                              double *prob);

/**
 * Mean token loss of the model on a corpus text file.
 *
 * # Safety
 * `corpus_path` is a NUL-terminated string; `loss` is writable.
 */
enum LmcStatus lmc_validation_loss(const struct LmcModel *model,
                                   const char *corpus_path,
                                   uintptr_t window,
                                   double *loss);

double lmc_perplexity(double loss);

/**
 * # Safety
 * `c` points to `dim` values; `schedule` is writable.
 */
enum LmcStatus lmc_schedule_constant(const double *c, uintptr_t dim, struct LmcSchedule **schedule);

/**
 * `α_i[n] = c_i · n^(−exponent)`.
 *
 * # Safety
 * `c` points to `dim` values; `schedule` is writable.
 */
enum LmcStatus lmc_schedule_power_decay(const double *c,
                                        uintptr_t dim,
                                        double exponent,
                                        struct LmcSchedule **schedule);

/**
 * # Safety
 * `lo` and `hi` point to `dim` values; `schedule` is writable.
 */
enum LmcStatus lmc_schedule_random_uniform(const double *lo,
                                           const double *hi,
                                           uintptr_t dim,
                                           uint64_t seed,
                                           struct LmcSchedule **schedule);

/**
 * Table schedule; `rows` is row-major with `n_rows × dim` values, row
 * `n−1` holding generation `n`.
 *
 * # Safety
 * `rows` points to `n_rows * dim` values; `schedule` is writable.
 */
enum LmcStatus lmc_schedule_explicit(const double *rows,
                                     uintptr_t n_rows,
                                     uintptr_t dim,
                                     struct LmcSchedule **schedule);

/**
 * # Safety
 * `schedule` is null or a live handle.
 */
void lmc_schedule_free(struct LmcSchedule *schedule);

/**
 * Iterates generations `1..=n_max` from initial counts `counts[0..dim]`.
 *
 * # Safety
 * `counts` points to `dim` values; `schedule` is live; `trajectory` writable.
 */
enum LmcStatus lmc_iterate(const double *counts,
                           uintptr_t dim,
                           const struct LmcSchedule *schedule,
                           struct LmcParadigm paradigm,
                           uint64_t n_max,
                           struct LmcTrajectory **trajectory);

/**
 * # Safety
 * `trajectory` is null or a live handle.
 */
void lmc_trajectory_free(struct LmcTrajectory *trajectory);

/**
 * Number of generations stored; 0 for a null handle.
 *
 * # Safety
 * `trajectory` is null or a live handle.
 */
uint64_t lmc_trajectory_len(const struct LmcTrajectory *trajectory);

/**
 * Copies `p̂_n` into `p_hat[0..dim]`.
 *
 * # Safety
 * `trajectory` is live; `p_hat` points to `dim` writable values.
 */
enum LmcStatus lmc_trajectory_p_hat(const struct LmcTrajectory *trajectory,
                                    uint64_t n,
                                    double *p_hat,
                                    uintptr_t dim);

/**
 * Deviation from the limit ratio at generation `n`. Returns `Numeric`
 * when the ratio is undefined there.
 *
 * # Safety
 * `trajectory` is live; `deviation` is writable.
 */
enum LmcStatus lmc_trajectory_deviation(const struct LmcTrajectory *trajectory,
                                        uint64_t n,
                                        double *deviation);

/**
 * Last generation whose deviation is at least `epsilon`, provided the
 * final stored generation is within `epsilon`. `*found` is 0 when no such
 * generation exists inside the stored horizon.
 *
 * # Safety
 * `trajectory` is live; `n0` and `found` are writable.
 */
enum LmcStatus lmc_convergence_scan(const struct LmcTrajectory *trajectory,
                                    double epsilon,
                                    uint64_t *n0,
                                    bool *found);

/**
 * Closed-form state at generation `n`: `y[0..dim]` and its total.
 *
 * # Safety
 * `counts` points to `dim` values; `schedule` is live; `y` points to
 * `dim` writable values; `y_total` is writable.
 */
enum LmcStatus lmc_closed_form(const double *counts,
                               uintptr_t dim,
                               const struct LmcSchedule *schedule,
                               struct LmcParadigm paradigm,
                               uint64_t n,
                               double *y,
                               double *y_total);

/**
 * Smallest total error that decomposes `reference → target` with every
 * component non-negative.
 *
 * # Safety
 * `target` and `y` point to `dim` values; `slack` is writable.
 */
enum LmcStatus lmc_min_slack(const double *target,
                             const double *y,
                             double y_total,
                             uintptr_t dim,
                             double *slack);

/**
 * Error vector `α_i = p_i·S + p_i·y − y_i` for total error `S = slack`.
 *
 * # Safety
 * `target` and `y` point to `dim` values; `alpha` to `dim` writable values.
 */
enum LmcStatus lmc_decompose_error(const double *target,
                                   const double *y,
                                   double y_total,
                                   uintptr_t dim,
                                   double slack,
                                   double *alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LMCOLLAPSE_H */
