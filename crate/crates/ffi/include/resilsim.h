#ifndef RESILSIM_H
#define RESILSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes. Values 1-3 match the CLI exit codes.
 */
typedef enum RsimStatus {
  RSIM_STATUS_OK = 0,
  RSIM_STATUS_RUNTIME = 1,
  RSIM_STATUS_CONFIG = 2,
  RSIM_STATUS_STATE_LIMIT = 3,
  RSIM_STATUS_NULL_POINTER = 4,
  RSIM_STATUS_INVALID_UTF8 = 5,
  RSIM_STATUS_OUT_OF_RANGE = 6,
  RSIM_STATUS_PANIC = 7,
} RsimStatus;

typedef struct RsimExact RsimExact;

/*
 A validated graph, deployment, endpoint set and failure configuration.
 */
typedef struct RsimModel RsimModel;

typedef struct RsimReport RsimReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer is
 valid until the next call into the library on this thread.
 */
const char *rsim_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rsim_version(void);

/*
 # Safety
 `s` must be null or a string returned by this library, not yet freed.
 */
void rsim_string_free(char *s);

/*
 Loads one of the built-in scenarios: `replicated == 0` for one container
 per service, otherwise the three-replica deployment.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum RsimStatus rsim_model_builtin(int32_t replicated, struct RsimModel **out);

/*
 Parses and validates a config document. Relative graph paths resolve
 against `base_dir`, which may be null.

 # Safety
 `config_json` must be a NUL-terminated string; `base_dir` null or
 NUL-terminated; `out` writable.
 */
enum RsimStatus rsim_model_from_config(const char *config_json,
                                       const char *base_dir,
                                       struct RsimModel **out);

/*
 # Safety
 `model` must be null or a handle from this library, not yet freed.
 */
void rsim_model_free(struct RsimModel *model);

/*
 Number of containers in the killable fleet.

 # Safety
 `model` must be a live handle.
 */
uintptr_t rsim_model_fleet_size(const struct RsimModel *model);

/*
 Overrides the failure parameters of a model. Pass `samples == 0` or
 `rounds == 0` to keep the current value; `p_fail` outside `[0, 1]` keeps
 the current value as well.

 # Safety
 `model` must be a live handle not shared with another thread during the call.
 */
enum RsimStatus rsim_model_set_failure(struct RsimModel *model,
                                       double p_fail,
                                       uint64_t samples,
                                       uint32_t rounds,
                                       uint64_t seed);

/*
 Runs the Monte-Carlo estimator. `workers == 0` uses every core.

 # Safety
 `model` must be a live handle; `out` writable.
 */
enum RsimStatus rsim_simulate(const struct RsimModel *model,
                              uint32_t workers,
                              struct RsimReport **out);

/*
 # Safety
 `report` must be null or a handle from this library, not yet freed.
 */
void rsim_report_free(struct RsimReport *report);

/*
 Weighted resilience over all samples, plus round mean and sample SD.
 Any output pointer may be null.

 # Safety
 `report` must be a live handle; non-null outputs writable.
 */
enum RsimStatus rsim_report_summary(const struct RsimReport *report,
                                    double *r_model,
                                    double *mean,
                                    double *sd);

/*
 # Safety
 `report` must be a live handle.
 */
uintptr_t rsim_report_endpoint_count(const struct RsimReport *report);

/*
 Availability of endpoint `index` (declaration order).

 # Safety
 `report` must be a live handle; `availability` writable.
 */
enum RsimStatus rsim_report_endpoint(const struct RsimReport *report,
                                     uintptr_t index,
                                     double *availability);

/*
 The full report as sorted JSON. Free with [`rsim_string_free`].

 # Safety
 `report` must be a live handle.
 */
char *rsim_report_to_json(const struct RsimReport *report);

/*
 Exact enumeration. `state_limit == 0` uses the default limit.

 # Safety
 `model` must be a live handle; `out` writable.
 */
enum RsimStatus rsim_exact(const struct RsimModel *model,
                           uint64_t state_limit,
                           struct RsimExact **out);

/*
 # Safety
 `exact` must be null or a handle from this library, not yet freed.
 */
void rsim_exact_free(struct RsimExact *exact);

/*
 # Safety
 `exact` must be a live handle.
 */
double rsim_exact_r_model(const struct RsimExact *exact);

/*
 Exact availability of endpoint `index` (declaration order).

 # Safety
 `exact` must be a live handle; `availability` writable.
 */
enum RsimStatus rsim_exact_endpoint(const struct RsimExact *exact,
                                    uintptr_t index,
                                    double *availability);

/*
 Measured resilience of a request log given as text. Pass
 `window_start >= window_end` to use the whole log.

 # Safety
 `log_text` must be NUL-terminated; `r_live` writable.
 */
enum RsimStatus rsim_analyze_log(const char *log_text,
                                 double window_start,
                                 double window_end,
                                 int32_t drop_4xx,
                                 double *r_live);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESILSIM_H */
