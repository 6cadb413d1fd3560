/* C interface to the hmmqcd change-detection library. */

#ifndef HMMQCD_H
#define HMMQCD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define HMMQCD_OK 0

// A required pointer argument was null.
#define HMMQCD_ERR_NULL_ARG 1

// The model JSON was not valid UTF-8 or not valid JSON for the schema.
#define HMMQCD_ERR_PARSE 2

// The model failed validation (dimensions, stochasticity, rho range).
#define HMMQCD_ERR_INVALID_MODEL 3

// A filter update failed (wrong observation length, non-finite value, or
// numeric underflow of every density).
#define HMMQCD_ERR_FILTER 4

// A simulation failed or its parameters were invalid.
#define HMMQCD_ERR_SIMULATION 5

// An output buffer was too small for the requested data.
#define HMMQCD_ERR_BUFFER_TOO_SMALL 6

// An internal panic was caught at the ABI boundary.
#define HMMQCD_ERR_INTERNAL 7

// Opaque handle to a running filter.
typedef struct HmmqcdFilter HmmqcdFilter;

// Opaque handle to a validated model plus its compiled augmented chain.
typedef struct HmmqcdModel HmmqcdModel;

// Monte Carlo summary for one threshold. Means come with standard errors.
typedef struct HmmqcdReport {
  // Mean detection delay `(tau - nu)^+`.
  double add;
  double add_se;
  // Fraction of runs alarming strictly before the change.
  double pfa_frac;
  double pfa_frac_se;
  // Posterior-based false-alarm estimate.
  double pfa_stat;
  double pfa_stat_se;
  // Mean Bayesian cost `c * delay + 1{false alarm}`.
  double cost;
  double cost_se;
  // Runs with no alarm before the horizon.
  uintptr_t censored;
  // Runs dropped due to numeric failure.
  uintptr_t failed;
} HmmqcdReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse a model from JSON (same schema as the CLI model files) and
// compile it. On success writes a handle to `out`.
//
// # Safety
// `json` must be a valid NUL-terminated C string; `out` must be a valid
// pointer to writable storage for one pointer.
int32_t hmmqcd_model_from_json(const char *json, struct HmmqcdModel **out);

// Release a model handle. Null is a no-op.
//
// # Safety
// `model` must be a pointer previously returned by
// [`hmmqcd_model_from_json`] and not yet freed.
void hmmqcd_model_free(struct HmmqcdModel *model);

// Number of pre-change and post-change states. Either output pointer may
// be null to skip it.
//
// # Safety
// `model` must be a live model handle; non-null outputs must be writable.
int32_t hmmqcd_model_state_counts(const struct HmmqcdModel *model,
                                  uintptr_t *n_alpha,
                                  uintptr_t *n_beta);

// Observation dimension expected by the filter (0 when the model does not
// pin one down).
//
// # Safety
// `model` must be a live model handle; `dim` must be writable.
int32_t hmmqcd_model_observation_dim(const struct HmmqcdModel *model, uintptr_t *dim);

// Start a filter at the model's initial belief.
//
// # Safety
// `model` must be a live model handle; `out` must be writable.
int32_t hmmqcd_filter_new(const struct HmmqcdModel *model, struct HmmqcdFilter **out);

// Release a filter handle. Null is a no-op.
//
// # Safety
// `filter` must be a pointer previously returned by [`hmmqcd_filter_new`]
// and not yet freed.
void hmmqcd_filter_free(struct HmmqcdFilter *filter);

// Rewind a filter to the initial belief.
//
// # Safety
// `filter` must be a live filter handle.
int32_t hmmqcd_filter_reset(struct HmmqcdFilter *filter);

// Advance the filter by one observation of `y_len` components.
//
// # Safety
// `filter` must be a live filter handle; `y` must point to `y_len`
// readable doubles.
int32_t hmmqcd_filter_step(struct HmmqcdFilter *filter, const double *y, uintptr_t y_len);

// Posterior probability that the change has occurred.
//
// # Safety
// `filter` must be a live filter handle; `m2` must be writable.
int32_t hmmqcd_filter_change_mass(const struct HmmqcdFilter *filter, double *m2);

// Time index of the current belief (0 before any observation).
//
// # Safety
// `filter` must be a live filter handle; `k` must be writable.
int32_t hmmqcd_filter_time(const struct HmmqcdFilter *filter, uintptr_t *k);

// Copy the posterior over all augmented states into `out` (capacity
// `out_len`, which must be at least the total state count).
//
// # Safety
// `filter` must be a live filter handle; `out` must point to `out_len`
// writable doubles.
int32_t hmmqcd_filter_posterior(const struct HmmqcdFilter *filter, double *out, uintptr_t out_len);

// Upper bound `1 - h` on the false-alarm probability of the threshold
// rule.
double hmmqcd_pfa_bound(double h);

// Monte Carlo evaluation of the threshold rule: `runs` simulated
// trajectories of length `horizon`, threshold `h`, delay penalty `c`,
// reproducible under `seed`.
//
// # Safety
// `model` must be a live model handle; `report` must be writable.
int32_t hmmqcd_monte_carlo(const struct HmmqcdModel *model,
                           double h,
                           double c,
                           uintptr_t horizon,
                           uintptr_t runs,
                           uint64_t seed,
                           struct HmmqcdReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMMQCD_H */
