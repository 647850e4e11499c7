/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GEOMLAB_H
#define GEOMLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GlStatus {
  GL_STATUS_OK = 0,
  GL_STATUS_NULL_POINTER = 1,
  GL_STATUS_INVALID_ARGUMENT = 2,
  GL_STATUS_SHAPE_MISMATCH = 3,
  GL_STATUS_NUMERICAL = 4,
  GL_STATUS_DIMENSION_CAP = 5,
  GL_STATUS_IO = 6,
  GL_STATUS_FORMAT = 7,
  GL_STATUS_BUFFER_TOO_SMALL = 8,
  GL_STATUS_PANIC = 9,
} GlStatus;

// Opaque dataset handle.
typedef struct GlDataset GlDataset;

// Opaque network handle: an architecture and its parameters.
typedef struct GlNetwork GlNetwork;

// Trained-model geometry at one parameter vector.
typedef struct GlGeometry {
  double ricci;
  double gauss_kronecker;
  size_t gk_retained;
  double mean_curvature;
  double grad_norm_f;
  double param_norm;
  double min_hessian_eigenvalue;
  double max_hessian_eigenvalue;
} GlGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *gl_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *gl_version(void);

// Sigmoid regression network `input → hidden… → output` with an L2 term,
// parameters drawn from `seed`.
//
// # Safety
// `hidden` points to `n_hidden` readable values; `out_network` is writable.
enum GlStatus gl_network_new_regression(size_t input,
                                        const size_t *hidden,
                                        size_t n_hidden,
                                        size_t output,
                                        uint64_t seed,
                                        struct GlNetwork **out_network);

// Sigmoid softmax classifier with `classes` outputs.
//
// # Safety
// As for [`gl_network_new_regression`].
enum GlStatus gl_network_new_classifier(size_t input,
                                        const size_t *hidden,
                                        size_t n_hidden,
                                        size_t classes,
                                        uint64_t seed,
                                        struct GlNetwork **out_network);

// Loads a checkpoint JSON file.
//
// # Safety
// `path` is a NUL-terminated UTF-8 string; `out_network` is writable.
enum GlStatus gl_network_load_checkpoint(const char *path, struct GlNetwork **out_network);

// # Safety
// `network` is NULL or a handle from this library not yet freed.
void gl_network_free(struct GlNetwork *network);

// Number of parameters, 0 for a NULL handle.
//
// # Safety
// `network` is NULL or a live handle.
size_t gl_network_param_count(const struct GlNetwork *network);

// Copies the flat parameter vector into `out_params[0..len]`.
//
// # Safety
// `network` is a live handle; `out_params` has `len` writable slots.
enum GlStatus gl_network_get_params(const struct GlNetwork *network,
                                    double *out_params,
                                    size_t len);

// Replaces the flat parameter vector.
//
// # Safety
// `network` is a live handle; `params` has `len` readable values.
enum GlStatus gl_network_set_params(struct GlNetwork *network, const double *params, size_t len);

// Copies `n` rows of inputs and targets into a new dataset. Classification
// targets are one-hot rows.
//
// # Safety
// `inputs` holds `n·input_dim` values and `targets` `n·output_dim` values;
// `out_dataset` is writable.
enum GlStatus gl_dataset_new(const double *inputs,
                             const double *targets,
                             size_t n,
                             size_t input_dim,
                             size_t output_dim,
                             bool classification,
                             struct GlDataset **out_dataset);

// `n` draws from a correlated Gaussian: the last `output_dims` of `dim`
// coordinates are targets.
//
// # Safety
// `out_dataset` is writable.
enum GlStatus gl_dataset_gaussian(size_t dim,
                                  size_t output_dims,
                                  double correlation,
                                  uint64_t covariance_seed,
                                  size_t n,
                                  uint64_t sample_seed,
                                  struct GlDataset **out_dataset);

// # Safety
// `dataset` is NULL or a handle from this library not yet freed.
void gl_dataset_free(struct GlDataset *dataset);

// Row count, 0 for a NULL handle.
//
// # Safety
// `dataset` is NULL or a live handle.
size_t gl_dataset_len(const struct GlDataset *dataset);

// Error term, regularizer and total loss at strength `beta`.
//
// # Safety
// Handles are live; the three outputs are writable.
enum GlStatus gl_network_loss(const struct GlNetwork *network,
                              const struct GlDataset *dataset,
                              double beta,
                              double *out_error,
                              double *out_reg,
                              double *out_total);

// Gradient of the total loss into `out_grad[0..len]`.
//
// # Safety
// Handles are live; `out_grad` has `len` writable slots.
enum GlStatus gl_network_gradient(const struct GlNetwork *network,
                                  const struct GlDataset *dataset,
                                  double beta,
                                  double *out_grad,
                                  size_t len);

// Error-surface geometry at the network's parameters. `cutoff` is the
// Gauss-Kronecker eigenvalue cutoff.
//
// # Safety
// Handles are live; `out_geometry` is writable.
enum GlStatus gl_network_geometry(const struct GlNetwork *network,
                                  const struct GlDataset *dataset,
                                  double beta,
                                  double cutoff,
                                  struct GlGeometry *out_geometry);

// Closed-form scalar curvature from a `d×d` Hessian and a gradient.
//
// # Safety
// `hessian` holds `d·d` values, `grad` `d` values; `out_ricci` is writable.
enum GlStatus gl_ricci_scalar(const double *hessian,
                              const double *grad,
                              size_t d,
                              double *out_ricci);

// Scalar curvature by contracting the Riemann tensor; O(d⁴), d ≤ 50.
//
// # Safety
// As for [`gl_ricci_scalar`].
enum GlStatus gl_ricci_scalar_oracle(const double *hessian,
                                     const double *grad,
                                     size_t d,
                                     double *out_ricci);

// Gauss-Kronecker curvature over eigenvalues with `|λ| ≥ cutoff`.
//
// # Safety
// As for [`gl_ricci_scalar`]; `out_k` and `out_retained` are writable.
enum GlStatus gl_gauss_kronecker(const double *hessian,
                                 const double *grad,
                                 size_t d,
                                 double cutoff,
                                 double *out_k,
                                 size_t *out_retained);

// Mean curvature, the trace of the second fundamental form under the metric.
//
// # Safety
// As for [`gl_ricci_scalar`].
enum GlStatus gl_mean_curvature(const double *hessian,
                                const double *grad,
                                size_t d,
                                double *out_mean);

// Binary segmentation of `series[0..n]`. A negative or NaN `penalty`
// selects the default. `betas` may be NULL, in which case the reported β is
// the index. Results go to the first `capacity` slots of the three output
// arrays; `out_count` always receives the number found, and
// `GL_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `capacity`.
//
// # Safety
// `series` holds `n` values, `betas` is NULL or holds `n` values, the output
// arrays have `capacity` writable slots and `out_count` is writable.
enum GlStatus gl_detect_change_points(const double *series,
                                      const double *betas,
                                      size_t n,
                                      double penalty,
                                      size_t min_segment,
                                      size_t *out_indices,
                                      double *out_betas,
                                      double *out_statistics,
                                      size_t capacity,
                                      size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOMLAB_H */
