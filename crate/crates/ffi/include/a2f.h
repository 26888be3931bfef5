#ifndef A2F_H
#define A2F_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum A2fStatus {
  A2F_STATUS_OK = 0,
  A2F_STATUS_NULL_POINTER = 1,
  A2F_STATUS_INVALID_ARGUMENT = 2,
  A2F_STATUS_IO = 3,
  /**
   * Not a checkpoint, corrupt, or an unsupported version.
   */
  A2F_STATUS_FORMAT = 4,
  A2F_STATUS_SHAPE_MISMATCH = 5,
  A2F_STATUS_NUMERICAL = 6,
  A2F_STATUS_EVALUATION = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  A2F_STATUS_INTERNAL = 8,
} A2fStatus;

/**
 * Opaque model handle.
 */
typedef struct A2fModel A2fModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *a2f_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a
 * success. Valid until the next call into the library on this thread.
 */
const char *a2f_last_error(void);

/**
 * Creates a freshly initialised model. `variant` is "S", "SD", "M" or "L".
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` writable.
 */
enum A2fStatus a2f_model_create(const char *variant,
                                uint32_t scale,
                                uint64_t seed,
                                struct A2fModel **out);

/**
 * Creates a custom model of `blocks` blocks with `channels` trunk channels.
 *
 * # Safety
 * `out` must be writable.
 */
enum A2fStatus a2f_model_create_custom(uint32_t blocks,
                                       uint32_t channels,
                                       uint32_t scale,
                                       uint64_t seed,
                                       struct A2fModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum A2fStatus a2f_model_load(const char *path, struct A2fModel **out);

/**
 * Writes the weights (no optimizer state) to `path`.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum A2fStatus a2f_model_save(const struct A2fModel *model, const char *path);

/**
 * Releases a model; NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void a2f_model_free(struct A2fModel *model);

/**
 * # Safety
 * `model` must come from this library and `out` be writable.
 */
enum A2fStatus a2f_model_param_count(const struct A2fModel *model, uint64_t *out);

/**
 * Multiply-accumulates of one forward pass producing a `width`×`height` output.
 *
 * # Safety
 * `model` must come from this library and `out` be writable.
 */
enum A2fStatus a2f_model_multiadds(const struct A2fModel *model,
                                   size_t width,
                                   size_t height,
                                   uint64_t *out);

/**
 * # Safety
 * `model` must come from this library and `out` be writable.
 */
enum A2fStatus a2f_model_scale(const struct A2fModel *model, uint32_t *out);

/**
 * # Safety
 * `model` must come from this library and `out` be writable.
 */
enum A2fStatus a2f_model_block_count(const struct A2fModel *model, uint32_t *out);

/**
 * Writes (λ_res, λ_att, λ_x) for every block, block-major, into `out`,
 * which holds `len` floats and must fit 3 × block count.
 *
 * # Safety
 * `model` must come from this library and `out` hold `len` floats.
 */
enum A2fStatus a2f_model_lambdas(const struct A2fModel *model, float *out, size_t len);

/**
 * Super-resolves a `width`×`height` RGB8 image into `output`, which holds
 * `output_len` bytes and must fit (scale·width)·(scale·height)·3.
 *
 * # Safety
 * `input` must hold width·height·3 bytes and `output` `output_len` bytes.
 */
enum A2fStatus a2f_model_upscale_rgb8(const struct A2fModel *model,
                                      const uint8_t *input,
                                      size_t width,
                                      size_t height,
                                      uint8_t *output,
                                      size_t output_len);

/**
 * PSNR on BT.601 luma of two RGB8 images, ignoring `shave` border pixels.
 *
 * # Safety
 * `a` and `b` must each hold width·height·3 bytes; `out` must be writable.
 */
enum A2fStatus a2f_psnr_y_rgb8(const uint8_t *a,
                               const uint8_t *b,
                               size_t width,
                               size_t height,
                               size_t shave,
                               double *out);

/**
 * SSIM on BT.601 luma of two RGB8 images, ignoring `shave` border pixels.
 *
 * # Safety
 * As [`a2f_psnr_y_rgb8`].
 */
enum A2fStatus a2f_ssim_y_rgb8(const uint8_t *a,
                               const uint8_t *b,
                               size_t width,
                               size_t height,
                               size_t shave,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* A2F_H */
