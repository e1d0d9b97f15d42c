#ifndef ANN_EPISTEMIC_H
#define ANN_EPISTEMIC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every fallible call.
 */
typedef enum {
  AE_STATUS_OK = 0,
  AE_STATUS_NULL_POINTER = 1,
  AE_STATUS_INVALID_ARGUMENT = 2,
  AE_STATUS_IO = 3,
  AE_STATUS_PARSE = 4,
  AE_STATUS_NOT_OPTIMISED = 5,
  AE_STATUS_REMAP = 6,
  AE_STATUS_SAMPLER = 7,
  AE_STATUS_NUMERIC = 8,
  AE_STATUS_PANIC = 9,
} AeStatus;

/**
 * Training patterns with binary targets.
 */
typedef struct AeDataset AeDataset;

/**
 * A trained network with its optimisation record.
 */
typedef struct AeModel AeModel;

/**
 * Per-weight remapping and inverse covariance for one model.
 */
typedef struct AeRemap AeRemap;

/**
 * Weight sets drawn by the sampler.
 */
typedef struct AeSamples AeSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ae_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ae_version(void);

/**
 * Loads a reduced-table CSV.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
AeStatus ae_dataset_load(const char *path, AeDataset **out);

/**
 * Builds a dataset from row-major `rows × input_dim` inputs and
 * `rows × output_dim` targets in [0, 1].
 *
 * # Safety
 * `inputs` and `targets` must hold the stated number of values; `out` must be writable.
 */
AeStatus ae_dataset_from_arrays(size_t rows,
                                size_t input_dim,
                                size_t output_dim,
                                const double *inputs,
                                const double *targets,
                                AeDataset **out);

/**
 * Generates the default synthetic cohort and returns its reduced table.
 *
 * # Safety
 * `out` must be writable.
 */
AeStatus ae_dataset_synthetic(uint64_t seed, AeDataset **out);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live dataset handle.
 */
size_t ae_dataset_len(const AeDataset *data);

/**
 * # Safety
 * `data` must be NULL or a dataset handle not yet freed.
 */
void ae_dataset_free(AeDataset *data);

/**
 * Trains a network with `n_hidden` hidden layers of the given widths from a
 * seeded random start, refining until fully optimised when possible.
 *
 * # Safety
 * `hidden` must hold `n_hidden` values; `data` must be live; `out` must be writable.
 */
AeStatus ae_model_train(const AeDataset *data,
                        const size_t *hidden,
                        size_t n_hidden,
                        uint64_t seed,
                        AeModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
AeStatus ae_model_load(const char *path, AeModel **out);

/**
 * # Safety
 * `model` must be live; `path` must be NUL-terminated.
 */
AeStatus ae_model_save(const AeModel *model, const char *path);

/**
 * Number of weights, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or live.
 */
size_t ae_model_weight_count(const AeModel *model);

/**
 * Whether training reached the fully-optimised criterion; false for NULL.
 *
 * # Safety
 * `model` must be NULL or live.
 */
bool ae_model_fully_optimised(const AeModel *model);

/**
 * Final training cost, or NaN for NULL.
 *
 * # Safety
 * `model` must be NULL or live.
 */
double ae_model_final_cost(const AeModel *model);

/**
 * Network outputs for one input pattern.
 *
 * # Safety
 * `x` must hold `n_in` values and `out` room for `n_out`.
 */
AeStatus ae_model_forward(const AeModel *model,
                          const double *x,
                          size_t n_in,
                          double *out,
                          size_t n_out);

/**
 * # Safety
 * `model` must be NULL or a model handle not yet freed.
 */
void ae_model_free(AeModel *model);

/**
 * Remaps a fully optimised model with default settings.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
AeStatus ae_remap_build(const AeModel *model, const AeDataset *data, AeRemap **out);

/**
 * Loads a remap file, checking it belongs to `model`.
 *
 * # Safety
 * `model` must be live; `path` NUL-terminated; `out` writable.
 */
AeStatus ae_remap_load(const char *path, const AeModel *model, AeRemap **out);

/**
 * # Safety
 * Handles must be live; `path` NUL-terminated.
 */
AeStatus ae_remap_save(const AeRemap *remap, const AeModel *model, const char *path);

/**
 * Cost evaluations spent building the remap, or 0 for NULL.
 *
 * # Safety
 * `remap` must be NULL or live.
 */
size_t ae_remap_eval_count(const AeRemap *remap);

/**
 * # Safety
 * `remap` must be NULL or a remap handle not yet freed.
 */
void ae_remap_free(AeRemap *remap);

/**
 * Runs the Metropolis sampler. Non-positive `step_sigma`, or zero `thin` or
 * `n_samples`, select the defaults.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
AeStatus ae_sample(const AeModel *model,
                   const AeRemap *remap,
                   const AeDataset *data,
                   double step_sigma,
                   size_t thin,
                   size_t n_samples,
                   uint64_t seed,
                   AeSamples **out);

/**
 * Number of draws, or 0 for NULL.
 *
 * # Safety
 * `samples` must be NULL or live.
 */
size_t ae_samples_len(const AeSamples *samples);

/**
 * Fraction of accepted proposals, or NaN for NULL.
 *
 * # Safety
 * `samples` must be NULL or live.
 */
double ae_samples_acceptance(const AeSamples *samples);

/**
 * Network outputs for pattern `x` under every drawn weight set, written
 * row-major as `draws × outputs` into `out` of length `out_len`.
 *
 * # Safety
 * `x` must hold `n_in` values and `out` room for `out_len`.
 */
AeStatus ae_samples_outputs(const AeSamples *samples,
                            const AeModel *model,
                            const double *x,
                            size_t n_in,
                            double *out,
                            size_t out_len);

/**
 * Gaussianity diagnostic of the draws against the remap's Mahalanobis form.
 *
 * # Safety
 * Handles must be live; the three result pointers writable.
 */
AeStatus ae_samples_diagnose(const AeSamples *samples,
                             const AeRemap *remap,
                             size_t trials,
                             uint64_t seed,
                             double *slope,
                             double *scatter,
                             double *equivalent_error);

/**
 * # Safety
 * `samples` must be NULL or a sample handle not yet freed.
 */
void ae_samples_free(AeSamples *samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANN_EPISTEMIC_H */
