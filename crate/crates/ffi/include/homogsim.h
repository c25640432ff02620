/* C interface to the homogsim human-AI interaction model. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * How a user's task gets done.
 */
typedef enum HsRegime {
  HsDefault = 0,
  HsInteractive = 1,
  HsManual = 2,
} HsRegime;

/**
 * Status code returned by every function.
 */
typedef enum HsStatus {
  HsOk = 0,
  HsNullPointer = 1,
  HsInvalidArgument = 2,
  HsInternalError = 3,
} HsStatus;

/**
 * Opaque model-parameter handle; create with `hs_model_new`, release with
 * `hs_model_free`.
 */
typedef struct HsModel HsModel;

/**
 * Solved outcome for a single user preference.
 */
typedef struct HsUserOutcome {
  enum HsRegime regime;
  /**
   * Posterior weight on the AI prior; NaN for manual users.
   */
  double weight;
  /**
   * Chosen signal noise standard deviation; NaN for manual users.
   */
  double sigma_u;
  double fidelity_error;
  double comm_cost;
  double utility_loss;
  double expected_output;
  double conditional_output_variance;
} HsUserOutcome;

/**
 * Output-distribution aggregates across the population.
 */
typedef struct HsPopulationStats {
  double mean_output;
  double variance_output;
  double societal_bias;
  double population_loss;
  double fraction_default;
  double fraction_interactive;
  double fraction_manual;
} HsPopulationStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a model. `cap_gamma` may be +infinity (manual work never pays);
 * writes the handle to `out`. Free with `hs_model_free`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HsStatus hs_model_new(double mu_pop,
                           double sigma_pop,
                           double mu_ai,
                           double sigma_ai,
                           double gamma,
                           double cap_gamma,
                           double temperature,
                           struct HsModel **out);

/**
 * Release a handle from `hs_model_new`. A null pointer is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer obtained from `hs_model_new` that has
 * not been freed yet.
 */
void hs_model_free(struct HsModel *model);

/**
 * Solve one user preference against the model.
 *
 * # Safety
 * `model` must come from `hs_model_new`; `out` must be valid.
 */
enum HsStatus hs_solve_user(const struct HsModel *model, double theta, struct HsUserOutcome *out);

/**
 * Regime thresholds for an unbiased model: `tau_d` bounds the default
 * region, `tau_a` the manual region (+infinity when manual never pays).
 * Fails with `HsInvalidArgument` when the AI prior is biased.
 *
 * # Safety
 * `model` must come from `hs_model_new`; `tau_d` and `tau_a` must be valid.
 */
enum HsStatus hs_thresholds(const struct HsModel *model, double *tau_d, double *tau_a);

/**
 * Population aggregates by quadrature. `panels` must be even and >= 2;
 * `half_width_sigmas` >= 6 (pass 8 for the default range).
 *
 * # Safety
 * `model` must come from `hs_model_new`; `out` must be valid.
 */
enum HsStatus hs_population_stats(const struct HsModel *model,
                                  double half_width_sigmas,
                                  size_t panels,
                                  struct HsPopulationStats *out);

/**
 * Run the self-training loop on a normal population and write the
 * per-iteration output variance into `out_variance` (length
 * `iterations + 1`; entry `t` describes the prior entering step `t`).
 * `ex_post` selects per-realization acceptance instead of the up-front
 * rule. Pass 0 for `m`/`m_q` to get the defaults (201 / 801).
 *
 * # Safety
 * `out_variance` must point to at least `iterations + 1` doubles.
 */
enum HsStatus hs_loop_run_normal(double mu,
                                 double sigma,
                                 double gamma,
                                 double cap_gamma,
                                 size_t m,
                                 size_t m_q,
                                 size_t iterations,
                                 bool ex_post,
                                 double *out_variance);

/**
 * Run the three-point-support loop and write the trajectory of the prior's
 * mass at zero into `out_p` (length `iterations + 1`). Pass NaN as
 * `frozen_sigma` for the adaptive policy.
 *
 * # Safety
 * `out_p` must point to at least `iterations + 1` doubles.
 */
enum HsStatus hs_three_point_run(double theta_bar,
                                 double p0,
                                 double gamma,
                                 double frozen_sigma,
                                 size_t iterations,
                                 double *out_p);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
