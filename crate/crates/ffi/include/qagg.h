#ifndef QAGG_H
#define QAGG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QaggStatus {
  QAGG_STATUS_OK = 0,
  QAGG_STATUS_NULL_POINTER = 1,
  QAGG_STATUS_INVALID_ARGUMENT = 2,
  QAGG_STATUS_NO_SIGN_CHANGE = 3,
  QAGG_STATUS_MULTIPLE_CROSSINGS = 4,
  QAGG_STATUS_NO_THRESHOLD = 5,
  QAGG_STATUS_INTERNAL = 6,
} QaggStatus;

/**
 * Opaque scenario handle.
 */
typedef struct QaggScenario QaggScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a scenario with default constants and uniform amplitudes.
 *
 * `assignment` and `lengths_km` both hold `num_paths` entries (1 to 3).
 * `t2_s` is the memory coherence time; 0 means no memory, +inf a perfect one.
 *
 * # Safety
 * The arrays must be valid for `num_paths` reads and `out` for one write.
 */
enum QaggStatus qagg_scenario_new(uint32_t code,
                                  const uint32_t *assignment,
                                  const double *lengths_km,
                                  size_t num_paths,
                                  double t2_s,
                                  struct QaggScenario **out);

/**
 * # Safety
 * `scenario` must come from `qagg_scenario_new` and not be used afterwards.
 */
void qagg_scenario_free(struct QaggScenario *scenario);

/**
 * Replaces the logical amplitudes with real values `alpha[0..len]`,
 * rescaled to unit norm.
 *
 * # Safety
 * `scenario` must be a live handle and `alpha` valid for `len` reads.
 */
enum QaggStatus qagg_scenario_set_alpha(struct QaggScenario *scenario,
                                        const double *alpha,
                                        size_t len);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum QaggStatus qagg_scenario_set_t2(struct QaggScenario *scenario, double t2_s);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum QaggStatus qagg_scenario_set_constants(struct QaggScenario *scenario,
                                            double attenuation_length_km,
                                            double light_speed_km_per_s);

/**
 * Fidelity and success probability; either output may be null.
 *
 * # Safety
 * `scenario` must be a live handle; non-null outputs must be writable.
 */
enum QaggStatus qagg_fidelity(const struct QaggScenario *scenario,
                              double *fidelity,
                              double *success_probability);

/**
 * Coherence time in [lo_s, hi_s] at which the two scenarios have equal
 * fidelity.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum QaggStatus qagg_crossing_t2(const struct QaggScenario *a,
                                 const struct QaggScenario *b,
                                 double lo_s,
                                 double hi_s,
                                 double *out);

/**
 * Length of the last path (km) at which the fidelity drops to `target`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` writable.
 */
enum QaggStatus qagg_threshold_km(const struct QaggScenario *scenario,
                                  double t2_s,
                                  double target,
                                  double *out);

/**
 * Message for the last failed call on this thread, empty after a success.
 * Valid until the next qagg call on the same thread.
 */
const char *qagg_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QAGG_H */
