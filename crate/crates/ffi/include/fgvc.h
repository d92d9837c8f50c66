#ifndef FGVC_H
#define FGVC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FgvcStatus {
  FGVC_STATUS_OK = 0,
  FGVC_STATUS_NULL_POINTER = 1,
  FGVC_STATUS_INVALID_ARGUMENT = 2,
  FGVC_STATUS_IO = 3,
  FGVC_STATUS_FORMAT = 4,
  FGVC_STATUS_UNBALANCED = 5,
  FGVC_STATUS_SHAPE = 6,
  FGVC_STATUS_INTERNAL = 7,
} FgvcStatus;

/**
 * A loaded model checkpoint.
 */
typedef struct FgvcModel FgvcModel;

/**
 * A loaded domain profile.
 */
typedef struct FgvcProfile FgvcProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" if none). The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fgvc_last_error(void);

/**
 * Static description of a status code.
 */
const char *fgvc_status_message(enum FgvcStatus status);

/**
 * Exact transportation problem: minimises `sum f_ij d_ij` subject to row sums
 * `supply[0..m]` and column sums `demand[0..n]`, with `dist` row-major
 * `m x n`. Writes the total cost, and the flow matrix when `flow_out` is
 * non-null (room for `m * n` values).
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum FgvcStatus fgvc_transport(const double *supply,
                               size_t m,
                               const double *demand,
                               size_t n,
                               const double *dist,
                               double *flow_out,
                               double *cost_out);

/**
 * `exp(-gamma * cost)`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum FgvcStatus fgvc_similarity(double cost, double gamma, double *out);

/**
 * The default `gamma` of [`fgvc_similarity`].
 */
double fgvc_default_gamma(void);

/**
 * Loads a profile directory written by `fgvc profile`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` valid for one write.
 */
enum FgvcStatus fgvc_profile_load(const char *dir, struct FgvcProfile **out);

/**
 * Builds a profile from `n_classes x dim` row-major centroids and per-class
 * weights (normalized to sum to one).
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` for one write.
 */
enum FgvcStatus fgvc_profile_from_arrays(const double *centroids,
                                         size_t n_classes,
                                         size_t dim,
                                         const double *weights,
                                         struct FgvcProfile **out);

/**
 * # Safety
 * `profile` must be null or a handle from this library, freed at most once.
 */
void fgvc_profile_free(struct FgvcProfile *profile);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t fgvc_profile_num_classes(const struct FgvcProfile *profile);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t fgvc_profile_feature_dim(const struct FgvcProfile *profile);

/**
 * Earth Mover's Distance between two profiles.
 *
 * # Safety
 * Handles must be live; `cost_out` valid for one write.
 */
enum FgvcStatus fgvc_profile_emd(const struct FgvcProfile *source,
                                 const struct FgvcProfile *target,
                                 double *cost_out);

/**
 * Loads a checkpoint directory written by `fgvc train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` valid for one write.
 */
enum FgvcStatus fgvc_model_load(const char *dir, struct FgvcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed at most once.
 */
void fgvc_model_free(struct FgvcModel *model);

/**
 * Input side length and number of classes.
 *
 * # Safety
 * `model` must be live; outputs valid for one write each.
 */
enum FgvcStatus fgvc_model_info(const struct FgvcModel *model,
                                size_t *resolution_out,
                                size_t *classes_out);

/**
 * Two-pass prediction on one `S x S x 3` channels-last image with values in
 * `[0, 1]`. Writes the averaged class probabilities (`probs_len` must equal
 * the class count) and the arg-max class.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum FgvcStatus fgvc_predict_two_pass(const struct FgvcModel *model,
                                      const double *image,
                                      size_t image_len,
                                      double theta,
                                      double *probs_out,
                                      size_t probs_len,
                                      size_t *class_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FGVC_H */
