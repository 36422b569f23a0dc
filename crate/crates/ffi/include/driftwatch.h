#ifndef DRIFTWATCH_H
#define DRIFTWATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum DwStatus {
  DW_STATUS_OK = 0,
  DW_STATUS_NULL_ARGUMENT = 1,
  DW_STATUS_CONFIG = 2,
  DW_STATUS_DATA = 3,
  DW_STATUS_IO = 4,
  DW_STATUS_CONTRACT = 5,
  DW_STATUS_ESTIMATION = 6,
  DW_STATUS_OUT_OF_RANGE = 7,
  DW_STATUS_INTERNAL = 8,
} DwStatus;

typedef enum DwStability {
  DW_STABILITY_STABLE = 0,
  DW_STABILITY_SUSPECT = 1,
  DW_STABILITY_UNSTABLE = 2,
} DwStability;

// Opaque streaming analyzer.
typedef struct DwAnalyzer DwAnalyzer;

// One residual sample of the last pushed frame.
typedef struct DwResidual {
  uint64_t frame_index;
  uint64_t track_id;
  uint32_t mask_label;
  double v_abs;
  double v_common;
  double v_rel;
  double threshold;
  double accumulated;
  uint32_t sustained_frames;
  // A DwStability value.
  int32_t stability;
  uint8_t suppressed;
  uint8_t degraded;
} DwResidual;

// A transition into `unstable` in the last pushed frame.
typedef struct DwAlert {
  uint64_t frame_index;
  uint64_t track_id;
  double time_s;
  // x, y, width, height
  uint32_t bbox[4];
  double accumulated_px;
  double threshold;
  uint32_t sustained_frames;
} DwAlert;

// Camera-motion estimate of the last pushed frame.
typedef struct DwGmc {
  // 0 for the first frame, which has no predecessor.
  uint8_t available;
  uint8_t degraded;
  // a00, a01, a10, a11, bx, by; maps previous-frame to current-frame pixels.
  double transform[6];
  double inlier_ratio;
  double mean_reprojection_error;
  uint32_t n_containers;
} DwGmc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *dw_version(void);

// Message of the last failure on this thread (empty after a success). The pointer
// stays valid until the next call into the library from this thread.
const char *dw_last_error(void);

// Create an analyzer from a JSON run configuration (same schema as the CLI
// config file; NULL means defaults).
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `out` must be valid for writes.
enum DwStatus dw_analyzer_new(const char *config_json, struct DwAnalyzer **out);

// Release an analyzer. NULL is ignored.
//
// # Safety
// `a` must be null or a handle from [`dw_analyzer_new`] not yet freed.
void dw_analyzer_free(struct DwAnalyzer *a);

// Analyse the next frame. `labels` is an optional `width * height` label image
// (0 = background, other values = container instance labels); NULL means no
// detections in this frame.
//
// # Safety
// `a` must be a live handle; `pixels` must hold `width * height` bytes; `labels`
// must be null or hold `width * height` values.
enum DwStatus dw_analyzer_push_frame(struct DwAnalyzer *a,
                                     uint64_t frame_index,
                                     const uint8_t *pixels_ptr,
                                     uint32_t width,
                                     uint32_t height,
                                     const uint32_t *labels);

// Number of residual samples produced by the last pushed frame (0 if none).
//
// # Safety
// `a` must be null or a live handle.
uintptr_t dw_analyzer_residual_count(const struct DwAnalyzer *a);

// Copy residual `index` of the last pushed frame into `out`.
//
// # Safety
// `a` must be a live handle and `out` valid for writes.
enum DwStatus dw_analyzer_residual(const struct DwAnalyzer *a,
                                   uintptr_t index,
                                   struct DwResidual *out);

// Number of alerts raised by the last pushed frame.
//
// # Safety
// `a` must be null or a live handle.
uintptr_t dw_analyzer_alert_count(const struct DwAnalyzer *a);

// Copy alert `index` of the last pushed frame into `out`.
//
// # Safety
// `a` must be a live handle and `out` valid for writes.
enum DwStatus dw_analyzer_alert(const struct DwAnalyzer *a, uintptr_t index, struct DwAlert *out);

// Camera-motion estimate of the last pushed frame.
//
// # Safety
// `a` must be a live handle and `out` valid for writes.
enum DwStatus dw_analyzer_gmc(const struct DwAnalyzer *a, struct DwGmc *out);

// Robust affine fit `dst ≈ A·src + b` from `n` point pairs (`src`/`dst` hold
// `2n` interleaved x, y values) with default RANSAC settings. Writes the six
// parameters (a00, a01, a10, a11, bx, by) to `out6` and the degraded flag to
// `degraded` (identity is written when degraded).
//
// # Safety
// `src` and `dst` must hold `2n` doubles, `out6` six doubles; `degraded` may be null.
enum DwStatus dw_estimate_affine(const double *src,
                                 const double *dst,
                                 uintptr_t n,
                                 uint64_t seed,
                                 double *out6,
                                 uint8_t *degraded);

// Dense Farnebäck flow from `prev` to `cur` with default parameters. `u` and `v`
// receive `width * height` floats; `valid` (optional) receives 1/0 per pixel.
//
// # Safety
// Image pointers must hold `width * height` bytes, `u`/`v` that many floats, and
// `valid` must be null or hold that many bytes.
enum DwStatus dw_farneback_flow(const uint8_t *prev,
                                const uint8_t *cur,
                                uint32_t width,
                                uint32_t height,
                                float *u,
                                float *v,
                                uint8_t *valid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIFTWATCH_H */
