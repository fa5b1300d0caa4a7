#ifndef PITRACK_H
#define PITRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PIT_SPLIT_TRAIN 0

#define PIT_SPLIT_VAL 1

#define PIT_SPLIT_TEST 2

#define PIT_OPERATOR_BILINEAR 0

#define PIT_OPERATOR_COARSE_TO_FINE 1

#define PIT_OPERATOR_BIQUADRATIC 2

#define PIT_OPERATOR_BICUBIC 3

// Number of tracking metrics; see `pit_metric_name`.
#define PIT_METRIC_COUNT 15

// Result code of every fallible call.
typedef enum {
  PIT_STATUS_OK = 0,
  PIT_STATUS_NULL_POINTER = 1,
  PIT_STATUS_INVALID_ARGUMENT = 2,
  PIT_STATUS_IO = 3,
  PIT_STATUS_FORMAT = 4,
  PIT_STATUS_SHAPE = 5,
  PIT_STATUS_INCOMPLETE_DESIGN = 6,
  PIT_STATUS_PANIC = 7,
} PitStatus;

// Simulation and imaging configuration.
typedef struct PitConfig PitConfig;

// A dataset directory written by `pit_dataset_generate` or `pitrack gen`.
typedef struct PitDataset PitDataset;

// Per-sequence tracking metrics of one split.
typedef struct PitMetrics PitMetrics;

// Ground-truth trajectory of one sequence.
typedef struct PitTrajectory PitTrajectory;

// Physics parameters in frame units (pixels and frames).
typedef struct {
  double g_frame;
  double restitution;
  double dt;
  double x_min;
  double x_max;
  double y_min;
  double y_max;
  double v_max_frame;
} PitFrameUnits;

// Refined three-frame window as interleaved `x, y` pairs.
typedef struct {
  double positions[6];
  double velocities[6];
  // 1 when a reflection happened during the step ending at that frame.
  uint8_t bounces[3];
} PitWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pit_version(void);

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call on the same thread.
const char *pit_last_error_message(void);

// Static name of a status code, or "unknown status".
const char *pit_status_name(int32_t status);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string obtained from this library, released once.
void pit_string_free(char *s);

// Default configuration.
//
// # Safety
// `out` must be valid for writes.
PitStatus pit_config_new(PitConfig **out);

// Configuration from JSON; missing fields take their defaults.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
PitStatus pit_config_from_json(const char *json, PitConfig **out);

// JSON rendering of a configuration, released with `pit_string_free`.
//
// # Safety
// `cfg` must be a live handle and `out` valid for writes.
PitStatus pit_config_to_json(const PitConfig *cfg, char **out);

// Sets one field by name, such as `gravity` or `n_test`. Integer fields
// require an integral value no larger than 2^53. The configuration is left
// unchanged when the result would be invalid.
//
// # Safety
// `cfg` must be a live handle and `key` a NUL-terminated string.
PitStatus pit_config_set(PitConfig *cfg, const char *key, double value);

// Reads one field by name.
//
// # Safety
// `cfg` must be a live handle, `key` a NUL-terminated string and `out`
// valid for writes.
PitStatus pit_config_get(const PitConfig *cfg, const char *key, double *out);

// # Safety
// `cfg` must be NULL or a live handle, released once.
void pit_config_free(PitConfig *cfg);

// Physics parameters of a configuration in frame units.
//
// # Safety
// `cfg` must be a live handle and `out` valid for writes.
PitStatus pit_frame_units(const PitConfig *cfg, PitFrameUnits *out);

// Refines three landmarks `x0, y0, x1, y1, x2, y2` with the physics model.
//
// # Safety
// `params` and `out` must be valid; `landmarks` must hold 6 values.
PitStatus pit_physics_refine(const PitFrameUnits *params, const double *landmarks, PitWindow *out);

// Jacobian of the refined positions and velocities (12 outputs, in the
// order of `PitWindow`) with respect to the 6 landmark coordinates,
// row-major into `out[72]`.
//
// # Safety
// `params` must be valid; `landmarks` must hold 6 values and `out` 72.
PitStatus pit_physics_refine_jacobian(const PitFrameUnits *params,
                                      const double *landmarks,
                                      double *out);

// Sub-pixel landmark `out[0] = x, out[1] = y` of a row-major heatmap.
//
// # Safety
// `values` must hold `width * height` values and `out` 2.
PitStatus pit_expectation(uint32_t op,
                          const double *values,
                          size_t width,
                          size_t height,
                          double *out);

// Jacobian of `pit_expectation` with respect to every heatmap value,
// row-major `2 x (width * height)`. Costs one pass per pixel.
//
// # Safety
// `values` must hold `width * height` values and `out` twice that.
PitStatus pit_expectation_jacobian(uint32_t op,
                                   const double *values,
                                   size_t width,
                                   size_t height,
                                   double *out);

// Unsupervised physics loss of three landmarks given in heatmap
// coordinates and scaled by `a` into image coordinates.
//
// # Safety
// `params` and `out` must be valid; `landmarks` must hold 6 values.
PitStatus pit_pill_loss(const PitFrameUnits *params,
                        const double *landmarks,
                        double a,
                        bool last_frame_only,
                        double *out);

// Ground-truth trajectory of sequence `index` in `split`, identical to the
// one stored by `pit_dataset_generate` for the same configuration.
//
// # Safety
// `cfg` must be a live handle and `out` valid for writes.
PitStatus pit_trajectory_simulate(const PitConfig *cfg,
                                  uint32_t split,
                                  uint32_t index,
                                  PitTrajectory **out);

// Number of frames, or 0 for a NULL handle.
//
// # Safety
// `traj` must be NULL or a live handle.
size_t pit_trajectory_len(const PitTrajectory *traj);

// Centers in pixels as interleaved `x, y`; `out` holds `len` values and
// needs `2 * pit_trajectory_len`.
//
// # Safety
// `traj` must be a live handle and `out` valid for `len` writes.
PitStatus pit_trajectory_positions(const PitTrajectory *traj, double *out, size_t len);

// Velocities in pixels per frame as interleaved `x, y`.
//
// # Safety
// `traj` must be a live handle and `out` valid for `len` writes.
PitStatus pit_trajectory_velocities(const PitTrajectory *traj, double *out, size_t len);

// Per-frame bounce flags, 1 when a reflection ended at that frame.
//
// # Safety
// `traj` must be a live handle and `out` valid for `len` writes.
PitStatus pit_trajectory_bounces(const PitTrajectory *traj, uint8_t *out, size_t len);

// # Safety
// `traj` must be NULL or a live handle, released once.
void pit_trajectory_free(PitTrajectory *traj);

// Renders all three splits of `cfg` into `dir`.
//
// # Safety
// `cfg` must be a live handle and `dir` a NUL-terminated path.
PitStatus pit_dataset_generate(const PitConfig *cfg, const char *dir);

// Opens a dataset directory after checking its manifest.
//
// # Safety
// `dir` must be a NUL-terminated path and `out` valid for writes.
PitStatus pit_dataset_open(const char *dir, PitDataset **out);

// Copy of the configuration the dataset was generated with.
//
// # Safety
// `ds` must be a live handle and `out` valid for writes.
PitStatus pit_dataset_config(const PitDataset *ds, PitConfig **out);

// Number of sequences in a split.
//
// # Safety
// `ds` must be a live handle and `out` valid for writes.
PitStatus pit_dataset_len(const PitDataset *ds, uint32_t split, size_t *out);

// Frames of one sequence, row-major `frames x height x width`.
//
// # Safety
// `ds` must be a live handle and `out` valid for `len` writes.
PitStatus pit_dataset_read_frames(const PitDataset *ds,
                                  uint32_t split,
                                  size_t index,
                                  float *out,
                                  size_t len);

// Stored ground-truth trajectory of one sequence.
//
// # Safety
// `ds` must be a live handle and `out` valid for writes.
PitStatus pit_dataset_trajectory(const PitDataset *ds,
                                 uint32_t split,
                                 size_t index,
                                 PitTrajectory **out);

// Tracks and evaluates every sequence of a split.
//
// # Safety
// `ds` must be a live handle and `out` valid for writes.
PitStatus pit_dataset_track(const PitDataset *ds,
                            uint32_t split,
                            bool temporal_mean,
                            PitMetrics **out);

// # Safety
// `ds` must be NULL or a live handle, released once.
void pit_dataset_free(PitDataset *ds);

// Static name of metric `index` (such as "P224" or "bounce56"), or NULL when out of range.
const char *pit_metric_name(uint32_t index);

// Number of evaluated sequences, or 0 for a NULL handle.
//
// # Safety
// `m` must be NULL or a live handle.
size_t pit_metrics_sequences(const PitMetrics *m);

// Mean of one metric over the evaluated sequences.
//
// # Safety
// `m` must be a live handle and `out` valid for writes.
PitStatus pit_metrics_mean(const PitMetrics *m, uint32_t metric, double *out);

// Median of one metric over the evaluated sequences.
//
// # Safety
// `m` must be a live handle and `out` valid for writes.
PitStatus pit_metrics_median(const PitMetrics *m, uint32_t metric, double *out);

// Writes the means as `config,replicate,metric,value` rows, the input
// format of `pit_effect_estimate` and `pitrack effects`.
//
// # Safety
// `m` must be a live handle; `path` and `config` NUL-terminated strings.
PitStatus pit_metrics_write_csv(const PitMetrics *m,
                                const char *path,
                                const char *config,
                                size_t replicate);

// # Safety
// `m` must be NULL or a live handle, released once.
void pit_metrics_free(PitMetrics *m);

// Effect of `term` (such as "C" or "ABF") on `metric` over a full 2^6
// design read from a metrics CSV. `replicates` of 0 infers the count.
// `metric` may also be "enc_avg" or "dec_avg".
//
// # Safety
// `path`, `term` and `metric` must be NUL-terminated strings and `out`
// valid for writes.
PitStatus pit_effect_estimate(const char *path,
                              size_t replicates,
                              const char *term,
                              const char *metric,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PITRACK_H */
