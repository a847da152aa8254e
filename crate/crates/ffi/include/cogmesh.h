#ifndef COGMESH_H
#define COGMESH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CogmeshStatus {
  COGMESH_STATUS_OK = 0,
  COGMESH_STATUS_NULL_POINTER = 1,
  COGMESH_STATUS_INVALID_ARGUMENT = 2,
  COGMESH_STATUS_VALIDATION = 3,
  COGMESH_STATUS_RUNTIME = 4,
  COGMESH_STATUS_PANIC = 5,
} CogmeshStatus;

/*
 The trace, metrics and knowledge base of one finished run.
 */
typedef struct CogmeshRun CogmeshRun;

/*
 A validated scenario.
 */
typedef struct CogmeshScenario CogmeshScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. The pointer
 stays valid until the next library call on this thread.
 */
const char *cogmesh_last_error(void);

/*
 Classifies a measurement; `out_class` receives 1, 2 or 3.

 # Safety
 `out_class` must be NULL or valid for writes.
 */
enum CogmeshStatus cogmesh_classify(double bandwidth_kbps,
                                    double delay_ms,
                                    double jitter_ms,
                                    double error_rate_pct,
                                    uint8_t *out_class);

/*
 Solves the occupancy model. `out_noncompletion` receives NaN when no
 secondary session is ever admitted.

 # Safety
 Both output pointers must be NULL or valid for writes.
 */
enum CogmeshStatus cogmesh_markov_analyze(uint32_t channels,
                                          double lambda_p,
                                          double mu_p,
                                          double lambda_s,
                                          double mu_s,
                                          double *out_blocking,
                                          double *out_noncompletion);

/*
 Erlang-B blocking for `channels` servers at `offered_load` Erlangs; NaN
 for a negative or non-finite load.
 */
double cogmesh_erlang_b(uint32_t channels, double offered_load);

/*
 Node that owns `slot` in a layout of `n_nodes` nodes and `m_channels`
 channels during `phase` (1 or 2).

 # Safety
 `out_node` must be NULL or valid for writes.
 */
enum CogmeshStatus cogmesh_slot_owner(uint32_t n_nodes,
                                      uint32_t m_channels,
                                      uint32_t phase,
                                      uint64_t slot,
                                      uint32_t *out_node);

/*
 Slots per round.

 # Safety
 `out_slots` must be NULL or valid for writes.
 */
enum CogmeshStatus cogmesh_round_length(uint32_t n_nodes,
                                        uint32_t m_channels,
                                        uint32_t phase,
                                        uint64_t *out_slots);

/*
 Parses and validates a scenario document.

 # Safety
 `json` must be NULL or a NUL-terminated string; `out` must be NULL or
 valid for writes.
 */
enum CogmeshStatus cogmesh_scenario_from_json(const char *json, struct CogmeshScenario **out);

/*
 # Safety
 `scenario` must be NULL or a handle from [`cogmesh_scenario_from_json`]
 that has not been freed.
 */
void cogmesh_scenario_free(struct CogmeshScenario *scenario);

/*
 Simulates `scenario` for `duration` seconds.

 # Safety
 `scenario` must be NULL or a live scenario handle; `out` must be NULL or
 valid for writes.
 */
enum CogmeshStatus cogmesh_run(const struct CogmeshScenario *scenario,
                               uint64_t seed,
                               double duration,
                               struct CogmeshRun **out);

/*
 # Safety
 `run` must be NULL or a handle from [`cogmesh_run`] that has not been
 freed.
 */
void cogmesh_run_free(struct CogmeshRun *run);

/*
 Negotiation failure rate of a run; NaN when nothing was negotiated or
 `run` is NULL.

 # Safety
 `run` must be NULL or a live run handle.
 */
double cogmesh_run_failure_rate(const struct CogmeshRun *run);

/*
 Metrics of a run as a JSON document, or NULL. Free with
 [`cogmesh_string_free`].

 # Safety
 `run` must be NULL or a live run handle.
 */
char *cogmesh_run_metrics_json(const struct CogmeshRun *run);

/*
 Trace of a run in JSON Lines form, header first, or NULL. Free with
 [`cogmesh_string_free`].

 # Safety
 `run` must be NULL or a live run handle.
 */
char *cogmesh_run_trace_jsonl(const struct CogmeshRun *run);

/*
 # Safety
 `s` must be NULL or a string returned by this library that has not been
 freed.
 */
void cogmesh_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGMESH_H */
