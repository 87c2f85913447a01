#ifndef SPLATKIT_H
#define SPLATKIT_H

/* Generated by cbindgen from splatkit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of every fallible call. Nonzero values match the CLI exit codes
 * where one exists.
 */
typedef enum {
  SK_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SK_NULL_ARG = 1,
  /**
   * Bad arguments or violated preconditions.
   */
  SK_USAGE = 2,
  /**
   * File or refiner I/O failed.
   */
  SK_IO = 3,
  /**
   * Non-finite values or degenerate geometry.
   */
  SK_NUMERICAL = 4,
} sk_status;

/**
 * Opaque scene handle; create with `sk_scene_load` or `sk_scene_random`,
 * release with `sk_scene_free`.
 */
typedef struct sk_scene sk_scene;

/**
 * Pinhole camera, world-to-camera. `rotation` is row-major.
 */
typedef struct {
  uint32_t width;
  uint32_t height;
  double fx;
  double fy;
  double cx;
  double cy;
  double rotation[9];
  double translation[3];
} sk_camera;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null when no call
 * has failed yet. The pointer stays valid until the next failing call on
 * the same thread.
 */
const char *sk_last_error(void);

/**
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle.
 */
sk_status sk_scene_load(const char *path, sk_scene **out);

/**
 * # Safety
 * `scene` must be a live handle; `path` a valid NUL-terminated string.
 */
sk_status sk_scene_save(const sk_scene *scene, const char *path);

/**
 * Synthesize a random scene (deterministic per seed); mainly for smoke
 * tests of embedding code.
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
sk_status sk_scene_random(uintptr_t splats, uint32_t sh_degree, uint64_t seed, sk_scene **out);

/**
 * Release a handle; null is a no-op.
 *
 * # Safety
 * `scene` must be a handle from this library that has not been freed.
 */
void sk_scene_free(sk_scene *scene);

/**
 * Number of splats; 0 for null.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
uintptr_t sk_scene_len(const sk_scene *scene);

/**
 * Basis degree (0 or 3); -1 for null.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
int32_t sk_scene_sh_degree(const sk_scene *scene);

/**
 * Render a scene into caller-allocated buffers. `rgb` holds
 * width·height·3 floats (interleaved, row-major). `depth`, `transmittance`,
 * and `confidence` each hold width·height floats and may be null when not
 * wanted.
 *
 * # Safety
 * `scene` and `cam` must be live; every non-null buffer must hold the
 * stated number of floats.
 */
sk_status sk_render(const sk_scene *scene,
                    const sk_camera *cam,
                    float *rgb,
                    float *depth,
                    float *transmittance,
                    float *confidence);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SPLATKIT_H */
