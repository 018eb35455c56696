#ifndef RARECALL_H
#define RARECALL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_ARGUMENT = 1,
  RC_STATUS_INVALID_ARGUMENT = 2,
  // Bad input files or data (exit code 2 on the command line).
  RC_STATUS_DATA = 3,
  // External embedding bridge failure.
  RC_STATUS_BRIDGE = 4,
  RC_STATUS_USAGE = 5,
  RC_STATUS_OUT_OF_RANGE = 6,
  RC_STATUS_PANIC = 7,
} RcStatus;

// Detections from one call to [`rc_detect_samples`].
typedef struct RcDetections RcDetections;

// A loaded species profile.
typedef struct RcProfile RcProfile;

typedef struct RcDetection {
  double start_s;
  double end_s;
  double score;
  // 1 for the target species, 0 otherwise.
  int32_t positive;
} RcDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next `rc_` call on the same thread.
const char *rc_last_error_message(void);

// Library version, statically allocated.
const char *rc_version(void);

// Loads and validates a profile file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RcStatus rc_profile_load(const char *path, struct RcProfile **out);

// Releases a profile; null is ignored.
//
// # Safety
// `profile` must come from [`rc_profile_load`] and not be used afterwards.
void rc_profile_free(struct RcProfile *profile);

// Decision threshold on the target score.
//
// # Safety
// `profile` must be a live handle; `out` must be writable.
enum RcStatus rc_profile_threshold(const struct RcProfile *profile, double *out);

// Length of raw embeddings the profile accepts.
//
// # Safety
// `profile` must be a live handle; `out` must be writable.
enum RcStatus rc_profile_dimension(const struct RcProfile *profile, size_t *out);

// Scores one raw embedding of the profile's provider.
//
// # Safety
// `values` must point to `len` doubles; outputs must be writable.
enum RcStatus rc_profile_classify_embedding(const struct RcProfile *profile,
                                            const double *values,
                                            size_t len,
                                            double *out_score,
                                            int32_t *out_positive);

// Runs event detection and classification over mono samples. Only
// profiles trained with the built-in baseline provider are supported here.
//
// # Safety
// `samples` must point to `len` floats; `out` must be writable.
enum RcStatus rc_detect_samples(const struct RcProfile *profile,
                                const float *samples,
                                size_t len,
                                uint32_t sample_rate,
                                struct RcDetections **out);

// Number of detections; 0 for null.
//
// # Safety
// `d` must be null or a live handle.
size_t rc_detections_len(const struct RcDetections *d);

// Copies detection `index` into `out`.
//
// # Safety
// `d` must be a live handle; `out` must be writable.
enum RcStatus rc_detections_get(const struct RcDetections *d,
                                size_t index,
                                struct RcDetection *out);

// # Safety
// `d` must come from [`rc_detect_samples`] and not be used afterwards.
void rc_detections_free(struct RcDetections *d);

// Normalizes and ranks `n` providers' clustering metrics.
//
// Writes each provider's overall score to `out_overall[i]` (input order)
// and the input indices from best to worst to `out_order`. An infinite
// `dunn` marks an unbounded index.
//
// # Safety
// Input arrays must hold `n` values; output arrays must hold `n` slots.
enum RcStatus rc_rank_metrics(size_t n,
                              const double *silhouette,
                              const double *davies_bouldin,
                              const double *dunn,
                              double *out_overall,
                              size_t *out_order);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RARECALL_H */
