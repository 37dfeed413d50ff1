#ifndef POSEREFINE_H
#define POSEREFINE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrStatus {
  PR_STATUS_OK = 0,
  PR_STATUS_NULL_POINTER = 1,
  PR_STATUS_INVALID_INPUT = 2,
  PR_STATUS_DATA_ERROR = 3,
  PR_STATUS_NUMERIC_FAILURE = 4,
  PR_STATUS_IO = 5,
  PR_STATUS_PANIC = 6,
} PrStatus;

/**
 * Rasterized frame handle.
 */
typedef struct PrFrame PrFrame;

/**
 * Mesh database handle.
 */
typedef struct PrMeshDb PrMeshDb;

/**
 * Scene handle: camera plus posed instances.
 */
typedef struct PrScene PrScene;

typedef struct PrCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  size_t width;
  size_t height;
  double near;
  double far;
} PrCamera;

typedef struct PrRefineConfig {
  size_t iterations;
  double learning_rate;
  double lr_decay;
  bool boundary_suppression;
  bool mask_dilation;
} PrRefineConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *pr_last_error_message(void);

struct PrMeshDb *pr_mesh_db_new(void);

/**
 * # Safety
 * `db` must come from `pr_mesh_db_new` (or be null) and not be used afterwards.
 */
void pr_mesh_db_free(struct PrMeshDb *db);

/**
 * # Safety
 * `db` must be a live handle; `count` must be writable.
 */
enum PrStatus pr_mesh_db_len(const struct PrMeshDb *db, size_t *count);

/**
 * Adds a builtin mesh (`box`, `cube`, `cylinder`, `cylinder-sym`, `mug`,
 * `sphere`) with procedural descriptors.
 *
 * # Safety
 * `db` must be a live handle, `name` a NUL-terminated string and `id` writable.
 */
enum PrStatus pr_mesh_db_add_builtin(struct PrMeshDb *db, const char *name, size_t *id);

/**
 * Adds a mesh from vertex positions (`3 * vertex_count`), triangle indices
 * (`3 * face_count`) and optional per-vertex descriptors
 * (`descriptor_dim * vertex_count`; pass null for zeros).
 *
 * # Safety
 * Arrays must hold the stated number of elements.
 */
enum PrStatus pr_mesh_db_add_mesh(struct PrMeshDb *db,
                                  const char *name,
                                  const double *vertices,
                                  size_t vertex_count,
                                  const uint32_t *faces,
                                  size_t face_count,
                                  const double *descriptors,
                                  size_t descriptor_dim,
                                  size_t *id);

/**
 * # Safety
 * `camera` must point to a valid `PrCamera`; `scene` must be writable.
 */
enum PrStatus pr_scene_new(const struct PrCamera *camera, struct PrScene **scene);

/**
 * Loads a JSON scene file together with the meshes it names.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `scene` and `db` must be writable.
 */
enum PrStatus pr_scene_load(const char *path, struct PrScene **scene, struct PrMeshDb **db);

/**
 * # Safety
 * `scene` must come from this library (or be null) and not be used afterwards.
 */
void pr_scene_free(struct PrScene *scene);

/**
 * # Safety
 * `scene` must be live and `pose` must hold 12 doubles.
 */
enum PrStatus pr_scene_add_instance(struct PrScene *scene,
                                    size_t mesh,
                                    const double *pose12,
                                    size_t *instance);

/**
 * # Safety
 * `scene` must be live and `count` writable.
 */
enum PrStatus pr_scene_instance_count(const struct PrScene *scene, size_t *count);

/**
 * # Safety
 * `scene` must be live and `pose` must have room for 12 doubles.
 */
enum PrStatus pr_scene_get_pose(const struct PrScene *scene, size_t instance, double *pose12);

/**
 * # Safety
 * `scene` must be live and `pose` must hold 12 doubles.
 */
enum PrStatus pr_scene_set_pose(struct PrScene *scene, size_t instance, const double *pose12);

/**
 * Renders `scene`; release the frame with `pr_frame_free`.
 *
 * # Safety
 * Handles must be live and `frame` writable.
 */
enum PrStatus pr_rasterize(const struct PrScene *scene,
                           const struct PrMeshDb *db,
                           struct PrFrame **frame);

/**
 * # Safety
 * `frame` must come from `pr_rasterize` (or be null) and not be used afterwards.
 */
void pr_frame_free(struct PrFrame *frame);

/**
 * # Safety
 * `frame` must be live; output pointers must be writable.
 */
enum PrStatus pr_frame_shape(const struct PrFrame *frame,
                             size_t *width,
                             size_t *height,
                             size_t *descriptor_dim);

/**
 * Copies the descriptor image (`dim * width * height` doubles).
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum PrStatus pr_frame_copy_descriptor(const struct PrFrame *frame, double *out, size_t len);

/**
 * Copies the depth buffer (`width * height` doubles, infinity on background).
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum PrStatus pr_frame_copy_depth(const struct PrFrame *frame, double *out, size_t len);

/**
 * Copies instance ids (`width * height`, -1 on background).
 *
 * # Safety
 * `out` must have room for `len` values.
 */
enum PrStatus pr_frame_copy_instance_ids(const struct PrFrame *frame, int32_t *out, size_t len);

struct PrRefineConfig pr_refine_config_default(void);

/**
 * Refines every pose of `scene` in place against an observed descriptor
 * image of the camera's size and the meshes' descriptor dimension.
 * `initial_loss` and `final_loss` may be null.
 *
 * # Safety
 * Handles must be live; `observed` must hold `observed_len` doubles.
 */
enum PrStatus pr_refine(struct PrScene *scene,
                        const struct PrMeshDb *db,
                        const double *observed,
                        size_t observed_len,
                        const struct PrRefineConfig *config,
                        double *initial_loss,
                        double *final_loss);

/**
 * ADD error over the vertices of `mesh`.
 *
 * # Safety
 * `gt` and `est` must hold 12 doubles; `out` must be writable.
 */
enum PrStatus pr_add_error(const struct PrMeshDb *db,
                           size_t mesh,
                           const double *gt,
                           const double *est,
                           double *out);

/**
 * ADD-S error over the vertices of `mesh`.
 *
 * # Safety
 * `gt` and `est` must hold 12 doubles; `out` must be writable.
 */
enum PrStatus pr_adds_error(const struct PrMeshDb *db,
                            size_t mesh,
                            const double *gt,
                            const double *est,
                            double *out);

/**
 * Area under the accuracy-threshold curve from 0 to `max_threshold`, in percent.
 *
 * # Safety
 * `errors` must hold `count` doubles; `out` must be writable.
 */
enum PrStatus pr_auc(const double *errors, size_t count, double max_threshold, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEREFINE_H */
