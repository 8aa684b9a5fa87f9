/* C interface for the ippkit trajectory toolkit. */

#ifndef IPPKIT_H
#define IPPKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API entry point.
 */
typedef enum IppStatus {
  IPP_OK = 0,
  IPP_ERR_NULL_POINTER = 1,
  IPP_ERR_PARSE = 2,
  IPP_ERR_VALIDATION = 3,
  IPP_ERR_SINGULARITY = 4,
  IPP_ERR_DEGENERATE_FLOW = 5,
  IPP_ERR_STATISTICS = 6,
  IPP_ERR_HORIZON = 7,
  IPP_ERR_USAGE = 8,
  IPP_ERR_IO = 9,
  IPP_ERR_PANIC = 10,
} IppStatus;

/**
 * Opaque scenario handle.
 */
typedef struct IppScenario IppScenario;

/**
 * Single-trajectory impact record.
 */
typedef struct IppImpact {
  /**
   * 1 if the trajectory reached the ground within the horizon.
   */
  int32_t landed;
  double tau;
  double x;
  double y;
} IppImpact;

/**
 * Ground-plane impact statistics of an ensemble.
 */
typedef struct IppImpactStats {
  uintptr_t n;
  double mean_x;
  double mean_y;
  double sd_x;
  double sd_y;
  double cov_xx;
  double cov_xy;
  double cov_yy;
} IppImpactStats;

/**
 * Moment-engine impact prediction.
 */
typedef struct IppMomentPrediction {
  double tau;
  double mean_x;
  double mean_y;
  double sd_x;
  double sd_y;
} IppMomentPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ipp_last_error(void);

/**
 * Built-in ballistic scenario.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum IppStatus ipp_scenario_nominal(struct IppScenario **out);

/**
 * Built-in canard-guided scenario.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum IppStatus ipp_scenario_guided(struct IppScenario **out);

/**
 * Parse and validate a scenario from a JSON document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string; `out` must be a valid
 * pointer to writable storage for one handle pointer.
 */
enum IppStatus ipp_scenario_from_json(const char *json, struct IppScenario **out);

/**
 * Override the integration step of a scenario handle.
 *
 * # Safety
 * `sc` must be a live handle from this library, not freed, and not
 * aliased mutably from another thread during the call.
 */
enum IppStatus ipp_scenario_set_step(struct IppScenario *sc, double step);

/**
 * Release a scenario handle. Passing null is a no-op.
 *
 * # Safety
 * `sc` must be null or a handle obtained from this library that has not
 * already been freed.
 */
void ipp_scenario_free(struct IppScenario *sc);

/**
 * Integrate one trajectory and report its impact.
 *
 * # Safety
 * `sc` must be a live handle; `out` must point to writable storage for
 * one `IppImpact`.
 */
enum IppStatus ipp_simulate_impact(const struct IppScenario *sc,
                                   uint64_t seed,
                                   bool deterministic,
                                   bool random_ic,
                                   struct IppImpact *out);

/**
 * Monte Carlo impact ensemble statistics.
 *
 * # Safety
 * `sc` must be a live handle; `out` must point to writable storage for
 * one `IppImpactStats`.
 */
enum IppStatus ipp_run_ensemble(const struct IppScenario *sc,
                                uintptr_t runs,
                                uint64_t seed,
                                bool random_ic,
                                struct IppImpactStats *out);

/**
 * Mean-field moment propagation impact prediction.
 *
 * # Safety
 * `sc` must be a live handle; `out` must point to writable storage for
 * one `IppMomentPrediction`.
 */
enum IppStatus ipp_moment_prediction(const struct IppScenario *sc,
                                     bool random_ic,
                                     struct IppMomentPrediction *out);

/**
 * Paired controlled/uncontrolled dispersion study.
 *
 * # Safety
 * `sc` must be a live handle; the three output pointers must each point
 * to writable storage of the corresponding type.
 */
enum IppStatus ipp_control_study(const struct IppScenario *sc,
                                 uintptr_t runs,
                                 uint64_t seed,
                                 struct IppImpactStats *controlled,
                                 struct IppImpactStats *uncontrolled,
                                 double *trace_ratio);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPPKIT_H */
