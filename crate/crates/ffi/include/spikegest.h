/* C interface to the spikegest gesture-decoding pipeline. */

#ifndef SPIKEGEST_H
#define SPIKEGEST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible `sg_` call.
 */
typedef enum SgStatus {
  /**
   * Success.
   */
  SG_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SG_NULL_POINTER = 1,
  /**
   * An argument or parameter combination failed validation.
   */
  SG_INVALID_ARGUMENT = 2,
  /**
   * The computation itself failed.
   */
  SG_RUNTIME_ERROR = 3,
  /**
   * A caller-supplied buffer is too small; nothing was written.
   */
  SG_BUFFER_TOO_SMALL = 4,
} SgStatus;

/**
 * Opaque labeled dataset: windowed samples plus the electrode layout.
 */
typedef struct SgDataset SgDataset;

/**
 * Opaque feature matrix: one labeled row of adapted kernel weights per
 * dataset sample, in sample order.
 */
typedef struct SgFeatureMatrix SgFeatureMatrix;

/**
 * Knobs of the encode -> cluster -> convolve feature path. The kernel grid
 * is fixed at 3x3 with channel stride 1.
 */
typedef struct SgFeatureParams {
  /**
   * Temporal-contrast spike threshold (> 0).
   */
  double theta_th;
  /**
   * Firing threshold of the integrate-and-fire readouts (> 0).
   */
  double theta_conv;
  /**
   * Refractory constant of the plasticity rule.
   */
  double tau_r;
  /**
   * Convolution window hop along time (>= 1).
   */
  uintptr_t temporal_stride;
  /**
   * Cluster count for k-means; 0 selects it with the elbow rule.
   */
  uintptr_t n_clusters;
  /**
   * Seed of the clustering stage.
   */
  uint64_t seed_clustering;
  /**
   * Seed of the shared initial kernel weights.
   */
  uint64_t seed_kernels;
} SgFeatureParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Never null.
 */
const char *sg_version(void);

/**
 * Message of the calling thread's most recent failure. Never null; empty
 * before the first failure. The pointer stays valid until the next failing
 * `sg_` call on the same thread.
 */
const char *sg_last_error(void);

/**
 * Temporal-contrast encodes one channel: writes `len` signed unit spikes
 * (-1, 0, +1) to `out`, one per input timestep.
 *
 * # Safety
 * `signal` must point to `len` readable doubles and `out` to `len` writable
 * bytes; the ranges must not overlap.
 */
enum SgStatus sg_encode_channel(const double *signal, uintptr_t len, double theta_th, int8_t *out);

/**
 * K-means over `n_points` 3-D positions packed as `[x0, y0, z0, x1, ...]`.
 * Writes one cluster index per point to `assignment_out` and, when non-null,
 * the within-cluster sum of squares to `wcss_out`.
 *
 * # Safety
 * `positions_xyz` must point to `3 * n_points` readable doubles and
 * `assignment_out` to `n_points` writable elements.
 */
enum SgStatus sg_kmeans(const double *positions_xyz,
                        uintptr_t n_points,
                        uintptr_t k,
                        uint64_t seed,
                        uint32_t *assignment_out,
                        double *wcss_out);

/**
 * Elbow selection: runs k-means for k = 1..=k_max and picks the knee of the
 * wcss curve. Writes the chosen k to `selected_k_out`; when `wcss_curve_out`
 * is non-null it receives `k_max` values, entry `k - 1` holding wcss at k.
 *
 * # Safety
 * `positions_xyz` must point to `3 * n_points` readable doubles;
 * `selected_k_out` must be writable; a non-null `wcss_curve_out` must point
 * to `k_max` writable doubles.
 */
enum SgStatus sg_elbow_select(const double *positions_xyz,
                              uintptr_t n_points,
                              uintptr_t k_max,
                              uint64_t seed,
                              uintptr_t *selected_k_out,
                              double *wcss_curve_out);

/**
 * Creates a synthetic dataset behind an opaque handle and stores it in
 * `out`. Free with [`sg_dataset_free`]. The generator is deterministic in
 * `seed`; `noise_amp` is the standard deviation of the additive noise.
 *
 * # Safety
 * `out` must be a valid pointer to an `SgDataset*` slot.
 */
enum SgStatus sg_dataset_synth(uintptr_t n_classes,
                               uintptr_t n_channels,
                               uintptr_t n_trials_per_class,
                               uintptr_t window_len,
                               double noise_amp,
                               uint64_t seed,
                               struct SgDataset **out);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `dataset` must be null or a handle from [`sg_dataset_synth`] that has not
 * been freed yet.
 */
void sg_dataset_free(struct SgDataset *dataset);

/**
 * Number of windowed samples; 0 when `dataset` is null.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`sg_dataset_synth`].
 */
uintptr_t sg_dataset_n_samples(const struct SgDataset *dataset);

/**
 * Number of electrode channels; 0 when `dataset` is null.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`sg_dataset_synth`].
 */
uintptr_t sg_dataset_n_channels(const struct SgDataset *dataset);

/**
 * Number of gesture classes; 0 when `dataset` is null.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`sg_dataset_synth`].
 */
uintptr_t sg_dataset_n_classes(const struct SgDataset *dataset);

/**
 * Runs the feature path over a dataset and stores the resulting matrix in
 * `out`. Free with [`sg_features_free`]. Row width is
 * `9 * (n_channels - 2 * n_clusters)`; samples are processed on the calling
 * thread.
 *
 * # Safety
 * `dataset` must be a live handle from [`sg_dataset_synth`], `params` must
 * point to a readable [`SgFeatureParams`], and `out` must be a valid pointer
 * to an `SgFeatureMatrix*` slot.
 */
enum SgStatus sg_features_compute(const struct SgDataset *dataset,
                                  const struct SgFeatureParams *params,
                                  struct SgFeatureMatrix **out);

/**
 * Releases a feature matrix. Null is ignored.
 *
 * # Safety
 * `features` must be null or a handle from [`sg_features_compute`] that has
 * not been freed yet.
 */
void sg_features_free(struct SgFeatureMatrix *features);

/**
 * Number of rows (samples); 0 when `features` is null.
 *
 * # Safety
 * `features` must be null or a live handle from [`sg_features_compute`].
 */
uintptr_t sg_features_rows(const struct SgFeatureMatrix *features);

/**
 * Row width (feature dimension); 0 when `features` is null or empty.
 *
 * # Safety
 * `features` must be null or a live handle from [`sg_features_compute`].
 */
uintptr_t sg_features_cols(const struct SgFeatureMatrix *features);

/**
 * Writes the class label of one row to `label_out`.
 *
 * # Safety
 * `features` must be a live handle from [`sg_features_compute`] and
 * `label_out` must be writable.
 */
enum SgStatus sg_features_label(const struct SgFeatureMatrix *features,
                                uintptr_t row,
                                uintptr_t *label_out);

/**
 * Copies one feature row into `out`. Fails with `SG_BUFFER_TOO_SMALL` when
 * `capacity` is below the row width; nothing is written in that case.
 *
 * # Safety
 * `features` must be a live handle from [`sg_features_compute`] and `out`
 * must point to `capacity` writable doubles.
 */
enum SgStatus sg_features_copy_row(const struct SgFeatureMatrix *features,
                                   uintptr_t row,
                                   double *out,
                                   uintptr_t capacity);

/**
 * Repeated stratified train/eval of a KNN classifier over a feature matrix.
 * Writes the mean test accuracy over `n_repeats` splits to
 * `mean_accuracy_out` and, when non-null, the sample standard deviation
 * (0 for a single repeat) to `std_accuracy_out`.
 *
 * # Safety
 * `features` must be a live handle from [`sg_features_compute`] and
 * `mean_accuracy_out` must be writable; `std_accuracy_out` may be null.
 */
enum SgStatus sg_train_eval(const struct SgFeatureMatrix *features,
                            uintptr_t knn_k,
                            double train_fraction,
                            uintptr_t n_repeats,
                            uint64_t seed_split,
                            double *mean_accuracy_out,
                            double *std_accuracy_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKEGEST_H */
