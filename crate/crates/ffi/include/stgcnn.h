#ifndef STGCNN_H
#define STGCNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum StgcnnStatus {
  STGCNN_STATUS_OK = 0,
  STGCNN_STATUS_NULL_POINTER = 1,
  STGCNN_STATUS_INVALID_ARGUMENT = 2,
  STGCNN_STATUS_IO = 3,
  STGCNN_STATUS_PARSE = 4,
  STGCNN_STATUS_CHECKPOINT = 5,
  STGCNN_STATUS_SHAPE = 6,
  STGCNN_STATUS_NUMERIC = 7,
  STGCNN_STATUS_PANIC = 8,
} StgcnnStatus;

/**
 * Edge-weight function selector for [`stgcnn_kernel_weight`].
 */
typedef enum StgcnnKernel {
  STGCNN_KERNEL_SIM = 0,
  STGCNN_KERNEL_L2 = 1,
  STGCNN_KERNEL_EXP = 2,
  STGCNN_KERNEL_SIM_EPS = 3,
  STGCNN_KERNEL_ONES = 4,
} StgcnnKernel;

/**
 * Opaque model handle.
 */
typedef struct StgcnnModel StgcnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *stgcnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *stgcnn_version(void);

/**
 * Trainable parameter count of the default architecture.
 */
size_t stgcnn_default_param_count(void);

/**
 * Creates a model with the default architecture and weights drawn from
 * `seed`.
 *
 * # Safety
 * `out` must be null or point to writable storage for one pointer.
 */
enum StgcnnStatus stgcnn_model_new(uint64_t seed, struct StgcnnModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` must be null or
 * writable.
 */
enum StgcnnStatus stgcnn_model_load(const char *path, struct StgcnnModel **out);

/**
 * Writes the model as a checkpoint (epoch 0).
 *
 * # Safety
 * `model` must be null or a live handle; `path` null or NUL-terminated.
 */
enum StgcnnStatus stgcnn_model_save(const struct StgcnnModel *model, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void stgcnn_model_free(struct StgcnnModel *model);

/**
 * Trainable parameter count of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t stgcnn_model_param_count(const struct StgcnnModel *model);

/**
 * Observed steps the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t stgcnn_model_t_obs(const struct StgcnnModel *model);

/**
 * Predicted steps, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t stgcnn_model_t_pred(const struct StgcnnModel *model);

/**
 * Predicted position distributions. `out` receives `t_pred × n_peds × 5`
 * values `(mu_x, mu_y, sigma_x, sigma_y, rho)` with absolute means; the
 * sigmas and correlation are those of the per-step output.
 *
 * # Safety
 * `obs` must hold `n_peds × t_obs × 2` values and `out`
 * `t_pred × n_peds × 5`.
 */
enum StgcnnStatus stgcnn_predict(const struct StgcnnModel *model,
                                 const double *obs,
                                 size_t n_peds,
                                 double *out);

/**
 * Draws `count` absolute trajectories; `out` receives
 * `count × n_peds × t_pred × 2` values. Deterministic in `seed`.
 *
 * # Safety
 * `obs` must hold `n_peds × t_obs × 2` values and `out` the sample block.
 */
enum StgcnnStatus stgcnn_sample(const struct StgcnnModel *model,
                                const double *obs,
                                size_t n_peds,
                                size_t count,
                                uint64_t seed,
                                double *out);

/**
 * Average displacement error of `n_peds × t_len × 2` arrays.
 *
 * # Safety
 * `pred` and `gt` must hold `n_peds × t_len × 2` values; `out` writable.
 */
enum StgcnnStatus stgcnn_ade(const double *pred,
                             const double *gt,
                             size_t n_peds,
                             size_t t_len,
                             double *out);

/**
 * Final displacement error of `n_peds × t_len × 2` arrays.
 *
 * # Safety
 * As for [`stgcnn_ade`].
 */
enum StgcnnStatus stgcnn_fde(const double *pred,
                             const double *gt,
                             size_t n_peds,
                             size_t t_len,
                             double *out);

/**
 * Edge weight between two points. `param` is sigma for `Exp`, epsilon for
 * `SimEps`, and ignored otherwise.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum StgcnnStatus stgcnn_kernel_weight(enum StgcnnKernel kind,
                                       double param,
                                       double xi,
                                       double yi,
                                       double xj,
                                       double yj,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STGCNN_H */
