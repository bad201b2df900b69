#ifndef DREAM_H
#define DREAM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DREAM_GATE_NONLINEAR 0

#define DREAM_GATE_LINEAR 1

#define DREAM_GATE_CLOSED 2

/*
 Number of landmarks expected by [`dream_estimate_pose`].
 */
#define DREAM_NUM_LANDMARKS 21

typedef enum DreamStatus {
  DREAM_STATUS_OK = 0,
  DREAM_STATUS_NULL_POINTER = 1,
  DREAM_STATUS_INVALID_ARGUMENT = 2,
  DREAM_STATUS_IO = 3,
  DREAM_STATUS_FORMAT = 4,
  DREAM_STATUS_NUMERICAL = 5,
  DREAM_STATUS_PANIC = 6,
} DreamStatus;

/*
 Trained residual block.
 */
typedef struct DreamBlock DreamBlock;

/*
 21-point 3D face model.
 */
typedef struct DreamFaceModel DreamFaceModel;

/*
 Head pose in radians and millimetres.
 */
typedef struct DreamPose {
  double yaw;
  double pitch;
  double roll;
  double tx;
  double ty;
  double tz;
  double rmse_px;
} DreamPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *dream_version(void);

/*
 Message of the last failed call on this thread, or NULL after a success.
 Valid until the next call into the library from this thread.
 */
const char *dream_last_error(void);

/*
 Loads a checkpoint file into a new block handle.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DreamStatus dream_block_load(const char *path, struct DreamBlock **out);

/*
 Releases a block; NULL is ignored.

 # Safety
 `block` must come from [`dream_block_load`] and not be freed twice.
 */
void dream_block_free(struct DreamBlock *block);

/*
 Embedding dimension of the block, 0 for NULL.

 # Safety
 `block` must be NULL or a live handle.
 */
size_t dream_block_dim(const struct DreamBlock *block);

/*
 Corrects one embedding: `out = x + c(yaw)·R(x)`. `out` may alias `x`.

 # Safety
 `x` and `out` must each hold `len` doubles.
 */
enum DreamStatus dream_block_apply(const struct DreamBlock *block,
                                   uint32_t gate,
                                   const double *x,
                                   size_t len,
                                   double yaw,
                                   double *out);

/*
 Corrects `n` row-major embeddings of width `dim` with one yaw each.
 Nothing is written to `out` unless every row succeeds.

 # Safety
 `xs` and `out` must each hold `n·dim` doubles and `yaws` `n` doubles.
 */
enum DreamStatus dream_block_apply_batch(const struct DreamBlock *block,
                                         uint32_t gate,
                                         const double *xs,
                                         size_t n,
                                         size_t dim,
                                         const double *yaws,
                                         double *out);

/*
 Gate coefficient for a yaw in radians.

 # Safety
 `out` must be writable.
 */
enum DreamStatus dream_yaw_coefficient(double yaw, uint32_t gate, double *out);

/*
 The built-in face model.

 # Safety
 `out` must be writable.
 */
enum DreamStatus dream_face_model_builtin(struct DreamFaceModel **out);

/*
 Loads a `landmark_id,X,Y,Z` CSV face model.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum DreamStatus dream_face_model_load(const char *path, struct DreamFaceModel **out);

/*
 Releases a face model; NULL is ignored.

 # Safety
 `model` must come from this library and not be freed twice.
 */
void dream_face_model_free(struct DreamFaceModel *model);

/*
 Estimates head pose from 21 landmarks given as `x0,y0,...,x20,y20` pixels.
 `visible` may be NULL (all visible) or point to 21 bytes, nonzero meaning visible.
 The camera has focal length equal to the image width and the principal point at the centre.

 # Safety
 `xy` must hold 42 doubles, `visible` NULL or 21 bytes, `out` writable.
 */
enum DreamStatus dream_estimate_pose(const struct DreamFaceModel *model,
                                     const double *xy,
                                     const uint8_t *visible,
                                     double image_width,
                                     double image_height,
                                     struct DreamPose *out);

/*
 Cosine similarity of two vectors of length `len`.

 # Safety
 `a` and `b` must hold `len` doubles, `out` writable.
 */
enum DreamStatus dream_cosine(const double *a, const double *b, size_t len, double *out);

/*
 Equal error rate of `n` scores, higher meaning more similar, with labels
 nonzero for same-subject pairs.

 # Safety
 `scores` must hold `n` doubles and `labels` `n` bytes, `out` writable.
 */
enum DreamStatus dream_eer(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DREAM_H */
