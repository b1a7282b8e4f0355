#ifndef CORALSIM_H
#define CORALSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of values in one diagnostics record.
 */
#define CORAL_RECORD_LEN 29

typedef enum CoralStatus {
  CORAL_STATUS_OK = 0,
  CORAL_STATUS_NULL_POINTER = 1,
  CORAL_STATUS_INVALID_ARGUMENT = 2,
  CORAL_STATUS_CONFIG = 3,
  CORAL_STATUS_INVALID_PARAMETER = 4,
  CORAL_STATUS_SOLVER_NOT_CONVERGED = 5,
  CORAL_STATUS_CFL_VIOLATION = 6,
  CORAL_STATUS_NEGATIVE_DENSITY = 7,
  CORAL_STATUS_NON_FINITE = 8,
  CORAL_STATUS_IO = 9,
  CORAL_STATUS_SNAPSHOT = 10,
  CORAL_STATUS_DIAGNOSTICS = 11,
  CORAL_STATUS_BUFFER_TOO_SMALL = 12,
  CORAL_STATUS_PANIC = 13,
} CoralStatus;

/**
 * Why the last [`coral_sim_run`] stopped.
 */
typedef enum CoralStop {
  CORAL_STOP_END_TIME = 0,
  CORAL_STOP_CONVERGED = 1,
  CORAL_STOP_MAX_STEPS = 2,
} CoralStop;

/**
 * Field selector for [`coral_sim_copy_field`].
 */
typedef enum CoralField {
  CORAL_FIELD_N = 0,
  CORAL_FIELD_C = 1,
  CORAL_FIELD_M = 2,
  CORAL_FIELD_VELOCITY_X = 3,
  CORAL_FIELD_VELOCITY_Y = 4,
  CORAL_FIELD_VELOCITY_Z = 5,
  CORAL_FIELD_PRESSURE = 6,
} CoralField;

/**
 * Opaque simulation handle.
 */
typedef struct CoralSim CoralSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *coral_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *coral_version(void);

/**
 * Creates a simulation from TOML configuration text.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CoralStatus coral_sim_new(const char *config_toml, struct CoralSim **out);

/**
 * Creates a simulation from TOML text and a snapshot file to resume from.
 *
 * # Safety
 * String arguments must be NUL-terminated and `out` a valid pointer.
 */
enum CoralStatus coral_sim_from_snapshot(const char *config_toml,
                                         const char *snapshot_path,
                                         struct CoralSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from this library and not be used afterwards.
 */
void coral_sim_free(struct CoralSim *sim);

/**
 * Advances up to `steps` steps with the configured time-step policy,
 * stopping early at the end time.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum CoralStatus coral_sim_step(struct CoralSim *sim, uint64_t steps);

/**
 * Runs from the current state to the end time (or convergence / step cap),
 * replacing the stored diagnostics series.
 *
 * # Safety
 * `sim` must be a live handle; `stop` may be null.
 */
enum CoralStatus coral_sim_run(struct CoralSim *sim, enum CoralStop *stop);

/**
 * Current time and step count. Either pointer may be null.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum CoralStatus coral_sim_time(const struct CoralSim *sim, double *t, uint64_t *step);

/**
 * Cell counts per axis; inactive axes report 1.
 *
 * # Safety
 * `sim` must be a live handle and `dims` point to three `size_t`.
 */
enum CoralStatus coral_sim_dims(const struct CoralSim *sim, size_t *dims);

/**
 * Number of values [`coral_sim_copy_field`] writes for `field`.
 *
 * # Safety
 * `sim` must be a live handle and `len` valid.
 */
enum CoralStatus coral_sim_field_len(const struct CoralSim *sim,
                                     enum CoralField field,
                                     size_t *len);

/**
 * Copies a field into `buf` (x fastest). Cell fields hold nx·ny·nz values;
 * the face array normal to axis `a` has one extra entry along `a`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` doubles.
 */
enum CoralStatus coral_sim_copy_field(const struct CoralSim *sim,
                                      enum CoralField field,
                                      double *buf,
                                      size_t len);

/**
 * Diagnostics of the current state as `CORAL_RECORD_LEN` values in the
 * column order given by [`coral_record_column`]. The residual columns are
 * zero here since they belong to a step, not a state.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for `CORAL_RECORD_LEN` doubles.
 */
enum CoralStatus coral_sim_current_record(const struct CoralSim *sim, double *out);

/**
 * Number of records stored by the last [`coral_sim_run`].
 *
 * # Safety
 * `sim` must be a live handle and `count` valid.
 */
enum CoralStatus coral_sim_record_count(const struct CoralSim *sim, size_t *count);

/**
 * Record `index` of the last run's series.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for `CORAL_RECORD_LEN` doubles.
 */
enum CoralStatus coral_sim_record(const struct CoralSim *sim, size_t index, double *out);

/**
 * Column name `index` as a static NUL-terminated string, or null when out
 * of range.
 */
const char *coral_record_column(size_t index);

/**
 * Checks every invariant over the last run's series. `failed` receives the
 * number of failed checks; details go to [`coral_last_error`] only on error.
 *
 * # Safety
 * `sim` must be a live handle and `failed` valid.
 */
enum CoralStatus coral_sim_verdict(const struct CoralSim *sim, size_t *failed);

/**
 * Writes the current state to a binary snapshot.
 *
 * # Safety
 * `sim` must be a live handle and `path` NUL-terminated.
 */
enum CoralStatus coral_sim_write_snapshot(const struct CoralSim *sim, const char *path);

/**
 * Closed-form homogeneous solution (n, m, c) at time `t`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum CoralStatus coral_oracle(double n0,
                              double m0,
                              double c0,
                              double t,
                              double *n,
                              double *m,
                              double *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORALSIM_H */
