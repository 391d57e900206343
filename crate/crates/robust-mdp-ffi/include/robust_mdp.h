#pragma once

/* Generated from src/lib.rs by the crate build script; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Evaluation modes for `rmdp_evaluate`. Pass as the `mode` argument.
typedef enum {
  // Fixed point of the per-state adversary operator.
  RMDP_EVAL_MODE_ROBUST_S = 0,
  // Fixed point of the per-(state, action) adversary operator.
  RMDP_EVAL_MODE_ROBUST_SA = 1,
  // Brute-force worst case over enumerated kernels or the parameter grid.
  RMDP_EVAL_MODE_ORACLE = 2,
} RmdpEvalMode;

// Solvability check modes for `rmdp_check_ssp`. Pass as `mode`.
typedef enum {
  RMDP_SSP_MODE_STRONG_S = 0,
  RMDP_SSP_MODE_STRONG_SA = 1,
  RMDP_SSP_MODE_WEAK_S = 2,
  RMDP_SSP_MODE_WEAK_SA = 3,
} RmdpSspMode;

// Result of every fallible call.
typedef enum {
  // The call succeeded.
  RMDP_STATUS_OK = 0,
  // The computation ran but a checked claim failed (reproduction rows).
  RMDP_STATUS_CHECK_FAILED = 1,
  // Null pointer, malformed JSON, bad shape, or unknown name.
  RMDP_STATUS_INVALID_ARGUMENT = 2,
  // A vertex, grid, or iteration budget was exceeded.
  RMDP_STATUS_BUDGET_EXCEEDED = 3,
  // Numerical failure or caught panic.
  RMDP_STATUS_INTERNAL_ERROR = 4,
} RmdpStatus;

// Opaque instance handle: an MDP, its uncertainty set, and any expected
// values. Create with `rmdp_instance_builtin` or `rmdp_instance_from_json`,
// release with `rmdp_instance_free`.
typedef struct RmdpInstance RmdpInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failing call on this thread, or an empty
// string when nothing failed yet.
//
// The pointer stays valid until the next failing call on the same thread;
// copy the contents before calling anything else. Never free it.
const char *rmdp_last_error_message(void);

// Create an instance from a builtin name ("five_state_disjoint",
// "square_hull", ...). On success writes a fresh handle through `out`.
//
// # Safety
// `name` must be a valid NUL-terminated string and `out` a valid location
// to write one pointer; both must stay valid for the duration of the call.
RmdpStatus rmdp_instance_builtin(const char *name, RmdpInstance **out);

// Create an instance from a JSON document in the same format the CLI and
// the library read and write. On success writes a fresh handle through
// `out`.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid location
// to write one pointer; both must stay valid for the duration of the call.
RmdpStatus rmdp_instance_from_json(const char *json, RmdpInstance **out);

// Release a handle. Passing NULL is a no-op.
//
// # Safety
// `inst` must be NULL or a handle returned by one of the constructors that
// has not been freed yet; it must not be used afterwards.
void rmdp_instance_free(RmdpInstance *inst);

// Number of states, or 0 for NULL.
//
// # Safety
// `inst` must be NULL or a live handle.
size_t rmdp_instance_num_states(const RmdpInstance *inst);

// Number of actions, or 0 for NULL.
//
// # Safety
// `inst` must be NULL or a live handle.
size_t rmdp_instance_num_actions(const RmdpInstance *inst);

// Serialize the instance to JSON. The returned string must be released
// with `rmdp_string_free`.
//
// # Safety
// `inst` must be a live handle and `out` a valid location to write one
// pointer.
RmdpStatus rmdp_instance_to_json(const RmdpInstance *inst, char **out);

// Release a string returned by this library. Passing NULL is a no-op.
//
// # Safety
// `s` must be NULL or a string returned by this library that has not been
// freed yet.
void rmdp_string_free(char *s);

// Worst-case value of a policy from the instance's initial distribution.
//
// `policy_probs` is row-major `num_states x num_actions` (NULL for the
// uniform policy), `mode` one of the `RmdpEvalMode` values. Writes the
// value through `out_value`.
//
// # Safety
// `inst` must be a live handle; `policy_probs` must be NULL or point to
// `policy_len` readable doubles; `out_value` must be a valid location to
// write one double.
RmdpStatus rmdp_evaluate(const RmdpInstance *inst,
                         const double *policy_probs,
                         size_t policy_len,
                         int mode,
                         double *out_value);

// Optimal robust value: the fixed point of the max-min Bellman operator.
//
// Writes the value from the initial distribution through `out_value`;
// when `out_state_values` is non-NULL it receives all `num_states`
// per-state values.
//
// # Safety
// `inst` must be a live handle; `out_value` must be a valid location to
// write one double; `out_state_values` must be NULL or point to
// `num_states` writable doubles.
RmdpStatus rmdp_solve(const RmdpInstance *inst, double *out_value, double *out_state_values);

// Search for an objective on which the per-state (or per-pair) linear
// minimization problems have no common minimizer.
//
// `mode` is one of the `RmdpSspMode` values; `samples` random objectives
// are tried with the given `seed`. Writes true through `out_holds` when no
// counterexample was found (sampling evidence, not proof) and false when
// one was.
//
// # Safety
// `inst` must be a live handle and `out_holds` a valid location to write
// one bool.
RmdpStatus rmdp_check_ssp(const RmdpInstance *inst,
                          int mode,
                          size_t samples,
                          uint64_t seed,
                          bool *out_holds);

// Recompute every expected value the instance declares.
//
// Writes a JSON array of result rows (quantity, value, expected,
// tolerance, pass) through `out_report_json`; release it with
// `rmdp_string_free`. Returns `Ok` when every row passes and
// `CheckFailed` when at least one fails; the report is written either way.
//
// # Safety
// `inst` must be a live handle and `out_report_json` a valid location to
// write one pointer.
RmdpStatus rmdp_reproduce(const RmdpInstance *inst, char **out_report_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
