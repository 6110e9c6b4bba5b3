#ifndef HGDAGGER_H
#define HGDAGGER_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HgStatus {
  HG_STATUS_OK = 0,
  HG_STATUS_NULL_POINTER = 1,
  HG_STATUS_INVALID_ARGUMENT = 2,
  HG_STATUS_IO = 3,
  HG_STATUS_FORMAT = 4,
  HG_STATUS_NOT_FOUND = 5,
  HG_STATUS_SESSION_REJECTED = 6,
  HG_STATUS_BUFFER_TOO_SMALL = 7,
  HG_STATUS_INTERNAL = 8,
} HgStatus;

typedef enum HgEventKind {
  HG_EVENT_KIND_TAKE_CONTROL = 0,
  HG_EVENT_KIND_RELEASE_CONTROL = 1,
  HG_EVENT_KIND_STEER_INPUT = 2,
  HG_EVENT_KIND_SPEED_INPUT = 3,
  HG_EVENT_KIND_PAUSE = 4,
  HG_EVENT_KIND_RESUME = 5,
} HgEventKind;

typedef enum HgApplied {
  HG_APPLIED_TAKEOVER = 0,
  HG_APPLIED_CHANGED = 1,
  HG_APPLIED_IGNORED = 2,
} HgApplied;

typedef enum HgPhase {
  HG_PHASE_IDLE = 0,
  HG_PHASE_NOVICE_DRIVING = 1,
  HG_PHASE_EXPERT_DRIVING = 2,
  HG_PHASE_PAUSED = 3,
  HG_PHASE_FINISHED = 4,
} HgPhase;

typedef struct HgEnsemble HgEnsemble;

typedef struct HgScenario HgScenario;

typedef struct HgSession HgSession;

/**
 * Ego pose and speed after a session tick.
 */
typedef struct HgEgoState {
  double x;
  double y;
  double theta;
  double s;
} HgEgoState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hg_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hg_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HgStatus hg_scenario_generate(uint64_t seed, double road_length, struct HgScenario **out);

/**
 * # Safety
 * `scenario` must come from [`hg_scenario_generate`] or be null.
 */
void hg_scenario_free(struct HgScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum HgStatus hg_scenario_obstacle_count(const struct HgScenario *scenario, size_t *out);

/**
 * Loads an ensemble checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HgStatus hg_ensemble_load(const char *path, struct HgEnsemble **out);

/**
 * # Safety
 * `ensemble` must come from [`hg_ensemble_load`] or be null.
 */
void hg_ensemble_free(struct HgEnsemble *ensemble);

/**
 * Mean action `[steer, speed_cmd]` and doubt for a 7-element observation.
 *
 * # Safety
 * `observation` must point to 7 doubles, `action` to 2 writable doubles,
 * `doubt` to one writable double.
 */
enum HgStatus hg_ensemble_predict(const struct HgEnsemble *ensemble,
                                  const double *observation,
                                  double *action,
                                  double *doubt);

/**
 * Starts a session driving `scenario` with `ensemble`. Pass NaN for `tau`
 * when no threshold is known. Both inputs stay owned by the caller.
 *
 * # Safety
 * Handles must be live; `id` must be NUL-terminated; `out` writable.
 */
enum HgStatus hg_session_start(const char *id,
                               const struct HgScenario *scenario,
                               const struct HgEnsemble *ensemble,
                               double rate_hz,
                               double tau,
                               struct HgSession **out);

/**
 * # Safety
 * `session` must come from [`hg_session_start`] or be null.
 */
void hg_session_free(struct HgSession *session);

/**
 * Applies an operator event. `has_value` selects whether `value` is used.
 *
 * # Safety
 * `session` must be live; `applied` may be null.
 */
enum HgStatus hg_session_event(struct HgSession *session,
                               enum HgEventKind kind,
                               bool has_value,
                               double value,
                               double client_time,
                               enum HgApplied *applied);

/**
 * Advances one control step.
 *
 * # Safety
 * `session` must be live; output pointers may be null.
 */
enum HgStatus hg_session_tick(struct HgSession *session,
                              struct HgEgoState *state,
                              double *doubt,
                              enum HgPhase *phase);

/**
 * Label and intervention counts collected so far.
 *
 * # Safety
 * `session` must be live; output pointers may be null.
 */
enum HgStatus hg_session_counts(const struct HgSession *session,
                                size_t *labels,
                                size_t *interventions);

/**
 * Writes the current snapshot as a wire-protocol JSON frame.
 *
 * # Safety
 * `buf` must hold `len` bytes (or be null to query the size); `written`
 * may be null.
 */
enum HgStatus hg_session_snapshot_json(struct HgSession *session,
                                       char *buf,
                                       size_t len,
                                       size_t *written);

/**
 * Writes the session's label file text (the dataset format).
 *
 * # Safety
 * As for [`hg_session_snapshot_json`].
 */
enum HgStatus hg_session_dataset_text(const struct HgSession *session,
                                      char *buf,
                                      size_t len,
                                      size_t *written);

/**
 * Bhattacharyya distance between two histograms of length `n`.
 *
 * # Safety
 * `p` and `q` must point to `n` doubles; `out` must be writable.
 */
enum HgStatus hg_bhattacharyya(const double *p, const double *q, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HGDAGGER_H */
