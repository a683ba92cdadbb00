#ifndef CHAOSMODEL_H
#define CHAOSMODEL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_IO = 3,
  CM_STATUS_PARSE = 4,
  CM_STATUS_INVARIANT = 5,
  CM_STATUS_NUMERICAL = 6,
  CM_STATUS_BUFFER_TOO_SMALL = 7,
  CM_STATUS_INTERNAL = 8,
} CmStatus;

/**
 * Opaque surrogate model handle.
 */
typedef struct CmModel CmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cm_version(void);

/**
 * Loads and validates a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CmStatus cm_model_load(const char *path, struct CmModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum CmStatus cm_model_save(const struct CmModel *model, const char *path);

/**
 * Fits a surrogate to `n_samples × n_channels` row-major data sampled every
 * `dt`, with the default PSD-matching options.
 *
 * # Safety
 * `data` must point to `n_samples * n_channels` doubles and `out` must be
 * a valid pointer.
 */
enum CmStatus cm_model_fit(const double *data,
                           size_t n_samples,
                           size_t n_channels,
                           double dt,
                           uint32_t degree,
                           uint64_t seed,
                           struct CmModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cm_model_free(struct CmModel *model);

/**
 * Number of channels; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cm_model_dim(const struct CmModel *model);

/**
 * Sampling interval; NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double cm_model_dt(const struct CmModel *model);

/**
 * Oscillator `index` (map order) as `(k, β, D)`.
 *
 * # Safety
 * `model` must be a live handle; outputs must be valid pointers.
 */
enum CmStatus cm_model_oscillator(const struct CmModel *model,
                                  size_t index,
                                  double *k,
                                  double *beta,
                                  double *d);

/**
 * Samples produced by `cm_model_generate` for `duration`.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cm_model_generate_len(const struct CmModel *model, double duration);

/**
 * Writes a surrogate trajectory as row-major `len × dim` doubles into
 * `buf` (capacity in doubles), storing the sample count in `out_len` and
 * the number of clamped inversions in `clamped`.
 *
 * # Safety
 * `model` must be a live handle, `buf` must hold `capacity` doubles and
 * the output pointers must be valid.
 */
enum CmStatus cm_model_generate(const struct CmModel *model,
                                double duration,
                                uint64_t seed,
                                double *buf,
                                size_t capacity,
                                size_t *out_len,
                                size_t *clamped);

/**
 * `q = T(y)` for one sample; `y` in channel order, `q` in map order.
 *
 * # Safety
 * `y` and `q` must each hold `dim` doubles.
 */
enum CmStatus cm_model_forward(const struct CmModel *model, const double *y, double *q);

/**
 * `y = T⁻¹(q)` for one sample; `clamped` is set when a coordinate left the
 * verified monotone domain.
 *
 * # Safety
 * `q` and `y` must each hold `dim` doubles; `clamped` may be null.
 */
enum CmStatus cm_model_inverse(const struct CmModel *model,
                               const double *q,
                               double *y,
                               bool *clamped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAOSMODEL_H */
