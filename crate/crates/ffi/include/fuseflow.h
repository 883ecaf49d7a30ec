/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef FUSEFLOW_H
#define FUSEFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FfAccumulation {
  FF_ACCUMULATION_LITERAL = 0,
  FF_ACCUMULATION_SINGLE = 1,
} FfAccumulation;

typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_POINTER = 1,
  FF_STATUS_INVALID_ARGUMENT = 2,
  FF_STATUS_SHAPE_MISMATCH = 3,
  FF_STATUS_NO_OVERLAP = 4,
  FF_STATUS_EVENT_ORDER = 5,
  FF_STATUS_IO = 6,
  FF_STATUS_FORMAT = 7,
  FF_STATUS_INTERNAL = 8,
} FfStatus;

/*
 Dense flow field with a per-pixel validity flag.
 */
typedef struct FfFlowField FfFlowField;

/*
 Confidence-map fusion state.
 */
typedef struct FfFusionState FfFusionState;

/*
 Stateful leaky event-flow filter.
 */
typedef struct FfLeakyFilter FfLeakyFilter;

typedef struct FfLeakyParams {
  double tau_us;
  uint32_t smooth_k;
  double act_threshold;
  double gain;
} FfLeakyParams;

typedef struct FfFarnebackParams {
  uint32_t pyramid_levels;
  double pyr_scale;
  uint32_t poly_n;
  double poly_sigma;
  uint32_t avg_window;
  uint32_t iterations;
  double det_eps;
} FfFarnebackParams;

typedef struct FfFusionParams {
  double thresh_farneback;
  double thresh_leakycnn;
  double thresh_confidence;
  double rho;
  enum FfAccumulation accumulation;
} FfFusionParams;

typedef struct FfEvent {
  uint64_t t_us;
  uint16_t x;
  uint16_t y;
  /*
   +1 or -1.
   */
  int8_t polarity;
} FfEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after success.
 The pointer stays valid until the next fuseflow call on this thread.
 */
const char *ff_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ff_version(void);

struct FfLeakyParams ff_leaky_params_default(void);

struct FfFarnebackParams ff_farneback_params_default(void);

struct FfFusionParams ff_fusion_params_default(void);

/*
 New field of the given size with every pixel invalid.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum FfStatus ff_flow_new(uint32_t width, uint32_t height, struct FfFlowField **out);

/*
 # Safety
 `flow` must be null or a handle from this library not yet freed.
 */
void ff_flow_free(struct FfFlowField *flow);

/*
 # Safety
 `flow` must be a live handle; `width`/`height` writable or null.
 */
enum FfStatus ff_flow_size(const struct FfFlowField *flow, uint32_t *width, uint32_t *height);

/*
 Reads one pixel. For invalid pixels `valid` is 0 and `u`, `v` are 0.

 # Safety
 `flow` must be a live handle; the output pointers must be writable.
 */
enum FfStatus ff_flow_get(const struct FfFlowField *flow,
                          uint32_t x,
                          uint32_t y,
                          float *u,
                          float *v,
                          uint8_t *valid);

/*
 Writes one pixel; non-finite components mark it invalid.

 # Safety
 `flow` must be a live handle.
 */
enum FfStatus ff_flow_set(struct FfFlowField *flow, uint32_t x, uint32_t y, float u, float v);

/*
 # Safety
 `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum FfStatus ff_flow_read_flo(const char *path, struct FfFlowField **out);

/*
 # Safety
 `flow` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum FfStatus ff_flow_write_flo(const struct FfFlowField *flow, const char *path);

/*
 Average endpoint error over pixels valid in both fields.

 # Safety
 Both handles must be live; `mean` writable.
 */
enum FfStatus ff_aee(const struct FfFlowField *flow, const struct FfFlowField *gt, double *mean);

/*
 Dense Farneback flow from `frame1` to `frame2`.

 # Safety
 Both frames must point to `width * height` doubles; `params` may be
 null for defaults; `out` writable.
 */
enum FfStatus ff_farneback(const double *frame1,
                           const double *frame2,
                           uint32_t width,
                           uint32_t height,
                           const struct FfFarnebackParams *params,
                           struct FfFlowField **out);

/*
 # Safety
 `params` may be null for defaults; `out` writable.
 */
enum FfStatus ff_leaky_new(uint32_t width,
                           uint32_t height,
                           const struct FfLeakyParams *params,
                           struct FfLeakyFilter **out);

/*
 # Safety
 `filter` must be null or a live handle.
 */
void ff_leaky_free(struct FfLeakyFilter *filter);

/*
 Feeds events without producing flow (e.g. before the first frame).

 # Safety
 `filter` live; `events_ptr` points to `n` events (may be null if 0).
 */
enum FfStatus ff_leaky_ingest(struct FfLeakyFilter *filter,
                              const struct FfEvent *events_ptr,
                              size_t n);

/*
 Accumulates the slice `[t0, t1)` and returns the flow sampled at `t1`.

 # Safety
 `filter` live; `events_ptr` points to `n` events (may be null if 0);
 `out` writable.
 */
enum FfStatus ff_leaky_event_flow(struct FfLeakyFilter *filter,
                                  const struct FfEvent *events_ptr,
                                  size_t n,
                                  uint64_t t0_us,
                                  uint64_t t1_us,
                                  struct FfFlowField **out);

/*
 # Safety
 `out` writable.
 */
enum FfStatus ff_fusion_new(uint32_t width, uint32_t height, struct FfFusionState **out);

/*
 # Safety
 `state` must be null or a live handle.
 */
void ff_fusion_free(struct FfFusionState *state);

/*
 Installs a new frame flow (copied) and applies the carry-over factor.

 # Safety
 Handles live; `params` may be null for defaults.
 */
enum FfStatus ff_fusion_on_frame_flow(struct FfFusionState *state,
                                      const struct FfFlowField *frame_flow,
                                      const struct FfFusionParams *params);

/*
 One fusion step on a new event flow. `source_mask`, if not null,
 receives `width * height` bytes: 1 where the output came from events.

 # Safety
 Handles live; `params` may be null; `out` writable; `source_mask` null
 or `width * height` writable bytes.
 */
enum FfStatus ff_fusion_step(struct FfFusionState *state,
                             const struct FfFlowField *event_flow,
                             const struct FfFusionParams *params,
                             struct FfFlowField **out,
                             uint8_t *source_mask);

/*
 Arithmetic operations for one event-pipeline prediction plus fusion.

 # Safety
 `leaky`/`fusion` may be null for defaults; `count` writable.
 */
enum FfStatus ff_ops_count(const struct FfLeakyParams *leaky,
                           const struct FfFusionParams *fusion,
                           uint32_t width,
                           uint32_t height,
                           uint64_t n_events,
                           uint64_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSEFLOW_H */
