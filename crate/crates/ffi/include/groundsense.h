/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GROUNDSENSE_H
#define GROUNDSENSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * At most one warning per category and frame, so this many entries always
 * suffice for `gs_alert_assess`.
 */
#define GS_MAX_WARNINGS_PER_FRAME 6

/**
 * Result code of every fallible call.
 */
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  /**
   * Bad parameter, sample, calibration or category id.
   */
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_IO = 3,
  /**
   * Malformed file contents.
   */
  GS_STATUS_FORMAT = 4,
  /**
   * Detection stream protocol violation or early end of stream.
   */
  GS_STATUS_PROTOCOL = 5,
  /**
   * Output buffer too small; the required size is reported.
   */
  GS_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  GS_STATUS_INTERNAL = 7,
} GsStatus;

/**
 * Opaque alert tracker for one stream.
 */
typedef struct GsAlert GsAlert;

/**
 * Opaque raw depth frame.
 */
typedef struct GsDepth GsDepth;

/**
 * Opaque IMU vibration processor.
 */
typedef struct GsImu GsImu;

typedef struct GsFusionConfig {
  uint32_t n_samples;
  double radius_frac;
  double trim_keep;
  uint64_t rng_seed;
} GsFusionConfig;

typedef struct GsAlertConfig {
  double threshold_m;
  /**
   * 0 disables hysteresis.
   */
  double clear_margin_m;
  uint32_t min_consecutive;
} GsAlertConfig;

typedef struct GsImuParams {
  double alpha;
  double process_noise;
  double measurement_noise;
  double initial_variance;
} GsImuParams;

typedef struct GsBox {
  double x1;
  double y1;
  double x2;
  double y2;
} GsBox;

typedef struct GsVibrationPoint {
  double t;
  double raw;
  double smoothed;
} GsVibrationPoint;

typedef struct GsIntrinsics {
  uint32_t width;
  uint32_t height;
  double fx;
  double fy;
  double cx;
  double cy;
} GsIntrinsics;

typedef struct GsExtrinsics {
  /**
   * Row-major 3x3 rotation.
   */
  double rotation[9];
  /**
   * Translation in meters.
   */
  double translation[3];
} GsExtrinsics;

typedef struct GsDetection {
  uint64_t frame_id;
  uint8_t category;
  double confidence;
  struct GsBox bbox;
} GsDetection;

typedef struct GsFused {
  struct GsDetection detection;
  /**
   * NaN when no sampled pixel had a depth return.
   */
  double distance_m;
  uint32_t valid_samples;
} GsFused;

typedef struct GsWarning {
  uint64_t frame_id;
  uint8_t category;
  double distance_m;
} GsWarning;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gs_last_error(void);

/**
 * Static, nul-terminated library version.
 */
const char *gs_version(void);

/**
 * Static snake_case name of a category id, or NULL for unknown ids.
 */
const char *gs_category_name(uint8_t id);

struct GsFusionConfig gs_fusion_config_default(void);

struct GsAlertConfig gs_alert_config_default(void);

struct GsImuParams gs_imu_params_default(void);

/**
 * Intersection over union; 0 for disjoint or degenerate boxes.
 */
double gs_iou(struct GsBox a, struct GsBox b);

/**
 * # Safety
 * `params` must be NULL (defaults) or point to a valid struct; `out` must be
 * writable.
 */
enum GsStatus gs_imu_new(const struct GsImuParams *params, struct GsImu **out);

/**
 * Feeds one accelerometer sample (m/s^2, device axes) and returns the raw and
 * smoothed vertical vibration. Timestamps must increase.
 *
 * # Safety
 * `imu` must come from `gs_imu_new`; `out` must be writable.
 */
enum GsStatus gs_imu_push(struct GsImu *imu,
                          double t,
                          double ax,
                          double ay,
                          double az,
                          struct GsVibrationPoint *out);

/**
 * # Safety
 * `imu` must come from `gs_imu_new` and not be used afterwards. NULL is a
 * no-op.
 */
void gs_imu_free(struct GsImu *imu);

/**
 * Copies a row-major raster of raw depth units into a new frame.
 *
 * # Safety
 * `values` must hold `width * height` elements; `out` must be writable.
 */
enum GsStatus gs_depth_new(uint32_t width,
                           uint32_t height,
                           const uint16_t *values,
                           double depth_scale,
                           uint64_t frame_id,
                           struct GsDepth **out);

/**
 * Loads a 16-bit grayscale depth PNG.
 *
 * # Safety
 * `path` must be a nul-terminated UTF-8 string; `out` must be writable.
 */
enum GsStatus gs_depth_load_png(const char *path,
                                double depth_scale,
                                uint64_t frame_id,
                                struct GsDepth **out);

/**
 * # Safety
 * `depth` must be a live handle; `width` and `height` must be writable.
 */
enum GsStatus gs_depth_size(const struct GsDepth *depth, uint32_t *width, uint32_t *height);

/**
 * Copies the raw values out. Returns `BufferTooSmall` when `capacity` is
 * below `width * height`.
 *
 * # Safety
 * `depth` must be a live handle; `buf` must hold `capacity` elements.
 */
enum GsStatus gs_depth_copy(const struct GsDepth *depth, uint16_t *buf, size_t capacity);

/**
 * # Safety
 * `depth` must come from this library and not be used afterwards. NULL is a
 * no-op.
 */
void gs_depth_free(struct GsDepth *depth);

/**
 * Reprojects a depth frame into the color camera. The result is a new frame
 * of the color resolution; the input is untouched.
 *
 * # Safety
 * `depth` must be a live handle; the calibration pointers must be valid and
 * `out` writable.
 */
enum GsStatus gs_align_depth(const struct GsDepth *depth,
                             const struct GsIntrinsics *depth_intr,
                             const struct GsIntrinsics *color_intr,
                             const struct GsExtrinsics *depth_to_color,
                             struct GsDepth **out);

/**
 * Trimmed mean depth in meters over the given pixels. `points` holds `n`
 * (u, v) pairs as `2 * n` integers. Writes NaN when no pixel had a return.
 *
 * # Safety
 * `depth` must be a live handle; `points` must hold `2 * n` values;
 * `out_m` must be writable and `out_valid` writable or NULL.
 */
enum GsStatus gs_robust_depth(const struct GsDepth *depth,
                              const uint32_t *points,
                              size_t n,
                              double trim_keep,
                              double *out_m,
                              uint32_t *out_valid);

/**
 * Estimates a distance for each detection from an aligned depth frame.
 * `out` receives exactly `n` entries in input order.
 *
 * # Safety
 * `depth` must be a live handle; `dets` must hold `n` entries and `out` room
 * for `capacity`; `cfg` may be NULL for defaults.
 */
enum GsStatus gs_fuse(const struct GsDepth *depth,
                      const struct GsDetection *dets,
                      size_t n,
                      const struct GsFusionConfig *cfg,
                      struct GsFused *out,
                      size_t capacity);

/**
 * # Safety
 * `cfg` must be NULL (defaults) or valid; `out` must be writable.
 */
enum GsStatus gs_alert_new(const struct GsAlertConfig *cfg, struct GsAlert **out);

/**
 * Applies the warning rule to one frame of fused detections and writes the
 * warnings raised, in category order. The tracker only advances when the
 * call succeeds.
 *
 * # Safety
 * `tracker` must be a live handle; `fused` must hold `n` entries; `out` must
 * have room for `capacity` and `out_count` must be writable.
 */
enum GsStatus gs_alert_assess(struct GsAlert *tracker,
                              uint64_t frame_id,
                              const struct GsFused *fused,
                              size_t n,
                              struct GsWarning *out,
                              size_t capacity,
                              size_t *out_count);

/**
 * Clears all per-category state, as at the start of a new stream.
 *
 * # Safety
 * `tracker` must be a live handle.
 */
enum GsStatus gs_alert_reset(struct GsAlert *tracker);

/**
 * # Safety
 * `tracker` must come from `gs_alert_new` and not be used afterwards. NULL
 * is a no-op.
 */
void gs_alert_free(struct GsAlert *tracker);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUNDSENSE_H */
