#ifndef PUSHSUM_H
#define PUSHSUM_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  Ok = 0,
  /**
   * Null pointer, bad UTF-8, or an argument outside its domain.
   */
  InvalidArgument = 1,
  /**
   * The config or instance failed validation.
   */
  ValidationFailed = 2,
  /**
   * The computation failed at run time.
   */
  RuntimeFailed = 3,
} PsStatus;

/**
 * Opaque simulation handle.
 */
typedef struct PsEngine PsEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Smooth penalty hinge `g(u)`; writes the value through `out`.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
PsStatus ps_penalty_g(double u, double *out);

/**
 * Derivative of the penalty hinge.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
PsStatus ps_penalty_g_prime(double u, double *out);

/**
 * Create an engine from a config JSON string (same schema as the CLI).
 * Returns null on failure; see [`ps_last_error`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string.
 */
PsEngine *ps_engine_new(const char *config_json);

/**
 * Destroy an engine created by [`ps_engine_new`]. Null is ignored.
 *
 * # Safety
 * `handle` must be a pointer returned by [`ps_engine_new`] that has not
 * been freed yet.
 */
void ps_engine_free(PsEngine *handle);

/**
 * Advance the engine by `rounds` rounds.
 *
 * # Safety
 * `handle` must be a live engine pointer.
 */
PsStatus ps_engine_step(PsEngine *handle, uint64_t rounds);

/**
 * Decision dimension of the engine's problem.
 *
 * # Safety
 * `handle` must be a live engine pointer; returns 0 on null.
 */
uintptr_t ps_engine_dim(const PsEngine *handle);

/**
 * Number of agents.
 *
 * # Safety
 * `handle` must be a live engine pointer; returns 0 on null.
 */
uintptr_t ps_engine_agents(const PsEngine *handle);

/**
 * Rounds executed so far.
 *
 * # Safety
 * `handle` must be a live engine pointer; returns 0 on null.
 */
uint64_t ps_engine_round(const PsEngine *handle);

/**
 * Copy the average iterate `z_bar` into `out` (length `len`, which must
 * equal the dimension).
 *
 * # Safety
 * `handle` must be a live engine pointer and `out` must point to `len`
 * writable doubles.
 */
PsStatus ps_engine_z_bar(const PsEngine *handle, double *out, uintptr_t len);

/**
 * Copy agent `agent`'s iterate `z_i` into `out`.
 *
 * # Safety
 * `handle` must be a live engine pointer and `out` must point to `len`
 * writable doubles.
 */
PsStatus ps_engine_agent_z(const PsEngine *handle, uintptr_t agent, double *out, uintptr_t len);

/**
 * Current `max_i ||z_i - z_bar||`.
 *
 * # Safety
 * `handle` must be a live engine pointer and `out` writable.
 */
PsStatus ps_engine_disagreement(const PsEngine *handle, double *out);

/**
 * Current `Psi(x_bar) / n`.
 *
 * # Safety
 * `handle` must be a live engine pointer and `out` writable.
 */
PsStatus ps_engine_mean_penalty(const PsEngine *handle, double *out);

/**
 * One-shot equivalent of `pushsum run`: execute the config at `config_path`
 * and write the artifacts into `out_dir`. `oracle_path` may be null.
 *
 * # Safety
 * All path arguments must be NUL-terminated strings (or null where allowed).
 */
PsStatus ps_run_to_dir(const char *config_path, const char *out_dir, const char *oracle_path);

/**
 * One-shot equivalent of `pushsum check`. On success writes a malloc'd JSON
 * report through `out_report` (free with [`ps_string_free`]) and returns Ok
 * iff every validator passed, ValidationFailed otherwise.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `out_report` may be null if the
 * caller does not want the report.
 */
PsStatus ps_check_config(const char *config_path, char **out_report);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must have been returned by this library and not freed before.
 */
void ps_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUSHSUM_H */
