//! C ABI for the spikegest gesture-decoding pipeline.
//!
//! Conventions shared by every exported function:
//!
//! - Fallible calls return [`SgStatus`]; `SG_OK` is zero. On any other code
//!   the message behind [`sg_last_error`] describes the failure.
//! - Handles ([`SgDataset`], [`SgFeatureMatrix`]) are opaque pointers with
//!   matching `_free` functions. Freeing null is a no-op; double-free is
//!   undefined behavior.
//! - Pointer arguments are borrowed for the duration of the call only.
//! - Panics never unwind across the boundary; they surface as
//!   `SG_RUNTIME_ERROR`.
//!
//! The header `include/spikegest.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::CString;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use spikegest::classifier::{evaluate, split_dataset, SplitDescriptor};
use spikegest::conv_snn::{extract_dataset_features, FeatureVector, PlasticityParams};
use spikegest::seeds::derive_seed;
use spikegest::signal_io::{generate_synthetic, LabeledDataset, SynthParams};
use spikegest::spatial_clustering::{elbow_select, kmeans};
use spikegest::spike_encoding::encode_channel;
use spikegest::Error;

// ---------------------------------------------------------------------------
// Status codes and the thread-local error message
// ---------------------------------------------------------------------------

/// Result code of every fallible `sg_` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum SgStatus {
    /// Success.
    SG_OK = 0,
    /// A required pointer argument was null.
    SG_NULL_POINTER = 1,
    /// An argument or parameter combination failed validation.
    SG_INVALID_ARGUMENT = 2,
    /// The computation itself failed.
    SG_RUNTIME_ERROR = 3,
    /// A caller-supplied buffer is too small; nothing was written.
    SG_BUFFER_TOO_SMALL = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: SgStatus, message: impl std::fmt::Display) -> SgStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
    status
}

fn fail_with(err: &Error) -> SgStatus {
    let status = match err {
        Error::Parameter(_) | Error::Config(_) => SgStatus::SG_INVALID_ARGUMENT,
        _ => SgStatus::SG_RUNTIME_ERROR,
    };
    fail(status, err)
}

fn guard(body: impl FnOnce() -> SgStatus) -> SgStatus {
    // A panicking body never touches caller state again, so suppressing the
    // unwind-safety bound cannot expose broken invariants to the caller.
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(SgStatus::SG_RUNTIME_ERROR, "internal panic"),
    }
}

/// Library version as a static NUL-terminated string. Never null.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent failure. Never null; empty
/// before the first failure. The pointer stays valid until the next failing
/// `sg_` call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Stateless kernels: encoding and clustering
// ---------------------------------------------------------------------------

/// Temporal-contrast encodes one channel: writes `len` signed unit spikes
/// (-1, 0, +1) to `out`, one per input timestep.
///
/// # Safety
/// `signal` must point to `len` readable doubles and `out` to `len` writable
/// bytes; the ranges must not overlap.
#[no_mangle]
pub unsafe extern "C" fn sg_encode_channel(
    signal: *const f64,
    len: usize,
    theta_th: f64,
    out: *mut i8,
) -> SgStatus {
    if signal.is_null() || out.is_null() {
        return fail(SgStatus::SG_NULL_POINTER, "signal and out must be non-null");
    }
    let signal = std::slice::from_raw_parts(signal, len);
    let out = std::slice::from_raw_parts_mut(out, len);
    guard(|| match encode_channel(signal, theta_th) {
        Ok(train) => {
            out.copy_from_slice(&train);
            SgStatus::SG_OK
        }
        Err(e) => fail_with(&e),
    })
}

unsafe fn collect_positions(xyz: *const f64, n_points: usize) -> Vec<[f64; 3]> {
    std::slice::from_raw_parts(xyz, 3 * n_points)
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect()
}

/// K-means over `n_points` 3-D positions packed as `[x0, y0, z0, x1, ...]`.
/// Writes one cluster index per point to `assignment_out` and, when non-null,
/// the within-cluster sum of squares to `wcss_out`.
///
/// # Safety
/// `positions_xyz` must point to `3 * n_points` readable doubles and
/// `assignment_out` to `n_points` writable elements.
#[no_mangle]
pub unsafe extern "C" fn sg_kmeans(
    positions_xyz: *const f64,
    n_points: usize,
    k: usize,
    seed: u64,
    assignment_out: *mut u32,
    wcss_out: *mut f64,
) -> SgStatus {
    if positions_xyz.is_null() || assignment_out.is_null() {
        return fail(
            SgStatus::SG_NULL_POINTER,
            "positions_xyz and assignment_out must be non-null",
        );
    }
    let positions = collect_positions(positions_xyz, n_points);
    let assignment_out = std::slice::from_raw_parts_mut(assignment_out, n_points);
    let wcss_out = wcss_out.as_mut();
    guard(move || match kmeans(&positions, k, seed) {
        Ok(result) => {
            for (slot, &c) in assignment_out.iter_mut().zip(&result.assignment) {
                *slot = c as u32;
            }
            if let Some(wcss) = wcss_out {
                *wcss = result.wcss;
            }
            SgStatus::SG_OK
        }
        Err(e) => fail_with(&e),
    })
}

/// Elbow selection: runs k-means for k = 1..=k_max and picks the knee of the
/// wcss curve. Writes the chosen k to `selected_k_out`; when `wcss_curve_out`
/// is non-null it receives `k_max` values, entry `k - 1` holding wcss at k.
///
/// # Safety
/// `positions_xyz` must point to `3 * n_points` readable doubles;
/// `selected_k_out` must be writable; a non-null `wcss_curve_out` must point
/// to `k_max` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_elbow_select(
    positions_xyz: *const f64,
    n_points: usize,
    k_max: usize,
    seed: u64,
    selected_k_out: *mut usize,
    wcss_curve_out: *mut f64,
) -> SgStatus {
    if positions_xyz.is_null() || selected_k_out.is_null() {
        return fail(
            SgStatus::SG_NULL_POINTER,
            "positions_xyz and selected_k_out must be non-null",
        );
    }
    let positions = collect_positions(positions_xyz, n_points);
    let selected_k_out = &mut *selected_k_out;
    let curve_out = if wcss_curve_out.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(wcss_curve_out, k_max))
    };
    guard(move || match elbow_select(&positions, k_max, seed) {
        Ok(result) => {
            *selected_k_out = result.selected_k;
            if let Some(curve) = curve_out {
                curve.copy_from_slice(&result.wcss_curve);
            }
            SgStatus::SG_OK
        }
        Err(e) => fail_with(&e),
    })
}

// ---------------------------------------------------------------------------
// Dataset handle
// ---------------------------------------------------------------------------

/// Opaque labeled dataset: windowed samples plus the electrode layout.
pub struct SgDataset {
    inner: LabeledDataset,
}

/// Creates a synthetic dataset behind an opaque handle and stores it in
/// `out`. Free with [`sg_dataset_free`]. The generator is deterministic in
/// `seed`; `noise_amp` is the standard deviation of the additive noise.
///
/// # Safety
/// `out` must be a valid pointer to an `SgDataset*` slot.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_synth(
    n_classes: usize,
    n_channels: usize,
    n_trials_per_class: usize,
    window_len: usize,
    noise_amp: f64,
    seed: u64,
    out: *mut *mut SgDataset,
) -> SgStatus {
    if out.is_null() {
        return fail(SgStatus::SG_NULL_POINTER, "out must be non-null");
    }
    let out = &mut *out;
    guard(move || {
        let params = SynthParams {
            noise_amp,
            ..SynthParams::new(n_classes, n_channels, n_trials_per_class, window_len, seed)
        };
        match generate_synthetic(&params) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SgDataset { inner }));
                SgStatus::SG_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle from [`sg_dataset_synth`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_free(dataset: *mut SgDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of windowed samples; 0 when `dataset` is null.
///
/// # Safety
/// `dataset` must be null or a live handle from [`sg_dataset_synth`].
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_n_samples(dataset: *const SgDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.samples.len())
}

/// Number of electrode channels; 0 when `dataset` is null.
///
/// # Safety
/// `dataset` must be null or a live handle from [`sg_dataset_synth`].
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_n_channels(dataset: *const SgDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.layout.n_channels())
}

/// Number of gesture classes; 0 when `dataset` is null.
///
/// # Safety
/// `dataset` must be null or a live handle from [`sg_dataset_synth`].
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_n_classes(dataset: *const SgDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.classes.len())
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

/// Knobs of the encode -> cluster -> convolve feature path. The kernel grid
/// is fixed at 3x3 with channel stride 1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SgFeatureParams {
    /// Temporal-contrast spike threshold (> 0).
    pub theta_th: f64,
    /// Firing threshold of the integrate-and-fire readouts (> 0).
    pub theta_conv: f64,
    /// Refractory constant of the plasticity rule.
    pub tau_r: f64,
    /// Convolution window hop along time (>= 1).
    pub temporal_stride: usize,
    /// Cluster count for k-means; 0 selects it with the elbow rule.
    pub n_clusters: usize,
    /// Seed of the clustering stage.
    pub seed_clustering: u64,
    /// Seed of the shared initial kernel weights.
    pub seed_kernels: u64,
}

/// Opaque feature matrix: one labeled row of adapted kernel weights per
/// dataset sample, in sample order.
pub struct SgFeatureMatrix {
    rows: Vec<FeatureVector>,
}

/// Runs the feature path over a dataset and stores the resulting matrix in
/// `out`. Free with [`sg_features_free`]. Row width is
/// `9 * (n_channels - 2 * n_clusters)`; samples are processed on the calling
/// thread.
///
/// # Safety
/// `dataset` must be a live handle from [`sg_dataset_synth`], `params` must
/// point to a readable [`SgFeatureParams`], and `out` must be a valid pointer
/// to an `SgFeatureMatrix*` slot.
#[no_mangle]
pub unsafe extern "C" fn sg_features_compute(
    dataset: *const SgDataset,
    params: *const SgFeatureParams,
    out: *mut *mut SgFeatureMatrix,
) -> SgStatus {
    let (Some(dataset), Some(params)) = (dataset.as_ref(), params.as_ref()) else {
        return fail(
            SgStatus::SG_NULL_POINTER,
            "dataset and params must be non-null",
        );
    };
    if out.is_null() {
        return fail(SgStatus::SG_NULL_POINTER, "out must be non-null");
    }
    let out = &mut *out;
    guard(move || {
        let run = || -> spikegest::Result<Vec<FeatureVector>> {
            let positions = dataset.inner.layout.positions();
            let clusters = if params.n_clusters == 0 {
                let n = positions.len();
                let k_max = (n / 2).clamp(2, 12).min(n);
                let elbow = elbow_select(&positions, k_max, params.seed_clustering)?;
                kmeans(
                    &positions,
                    elbow.selected_k,
                    derive_seed(params.seed_clustering, elbow.selected_k as u64),
                )?
            } else {
                kmeans(&positions, params.n_clusters, params.seed_clustering)?
            };
            let plasticity = PlasticityParams {
                tau_r: params.tau_r,
                temporal_stride: params.temporal_stride,
                channel_stride: 1,
            };
            extract_dataset_features(
                &dataset.inner,
                &clusters,
                params.theta_th,
                params.seed_kernels,
                &plasticity,
                params.theta_conv,
                false,
            )
        };
        match run() {
            Ok(rows) => {
                *out = Box::into_raw(Box::new(SgFeatureMatrix { rows }));
                SgStatus::SG_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a feature matrix. Null is ignored.
///
/// # Safety
/// `features` must be null or a handle from [`sg_features_compute`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn sg_features_free(features: *mut SgFeatureMatrix) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Number of rows (samples); 0 when `features` is null.
///
/// # Safety
/// `features` must be null or a live handle from [`sg_features_compute`].
#[no_mangle]
pub unsafe extern "C" fn sg_features_rows(features: *const SgFeatureMatrix) -> usize {
    features.as_ref().map_or(0, |f| f.rows.len())
}

/// Row width (feature dimension); 0 when `features` is null or empty.
///
/// # Safety
/// `features` must be null or a live handle from [`sg_features_compute`].
#[no_mangle]
pub unsafe extern "C" fn sg_features_cols(features: *const SgFeatureMatrix) -> usize {
    features
        .as_ref()
        .and_then(|f| f.rows.first())
        .map_or(0, |row| row.values.len())
}

/// Writes the class label of one row to `label_out`.
///
/// # Safety
/// `features` must be a live handle from [`sg_features_compute`] and
/// `label_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_features_label(
    features: *const SgFeatureMatrix,
    row: usize,
    label_out: *mut usize,
) -> SgStatus {
    let Some(features) = features.as_ref() else {
        return fail(SgStatus::SG_NULL_POINTER, "features must be non-null");
    };
    if label_out.is_null() {
        return fail(SgStatus::SG_NULL_POINTER, "label_out must be non-null");
    }
    let Some(feature) = features.rows.get(row) else {
        return fail(
            SgStatus::SG_INVALID_ARGUMENT,
            format!("row {row} out of range for {} rows", features.rows.len()),
        );
    };
    *label_out = feature.label;
    SgStatus::SG_OK
}

/// Copies one feature row into `out`. Fails with `SG_BUFFER_TOO_SMALL` when
/// `capacity` is below the row width; nothing is written in that case.
///
/// # Safety
/// `features` must be a live handle from [`sg_features_compute`] and `out`
/// must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_features_copy_row(
    features: *const SgFeatureMatrix,
    row: usize,
    out: *mut f64,
    capacity: usize,
) -> SgStatus {
    let Some(features) = features.as_ref() else {
        return fail(SgStatus::SG_NULL_POINTER, "features must be non-null");
    };
    if out.is_null() {
        return fail(SgStatus::SG_NULL_POINTER, "out must be non-null");
    }
    let Some(feature) = features.rows.get(row) else {
        return fail(
            SgStatus::SG_INVALID_ARGUMENT,
            format!("row {row} out of range for {} rows", features.rows.len()),
        );
    };
    if capacity < feature.values.len() {
        return fail(
            SgStatus::SG_BUFFER_TOO_SMALL,
            format!(
                "capacity {capacity} below row width {}",
                feature.values.len()
            ),
        );
    }
    std::slice::from_raw_parts_mut(out, feature.values.len()).copy_from_slice(&feature.values);
    SgStatus::SG_OK
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Repeated stratified train/eval of a KNN classifier over a feature matrix.
/// Writes the mean test accuracy over `n_repeats` splits to
/// `mean_accuracy_out` and, when non-null, the sample standard deviation
/// (0 for a single repeat) to `std_accuracy_out`.
///
/// # Safety
/// `features` must be a live handle from [`sg_features_compute`] and
/// `mean_accuracy_out` must be writable; `std_accuracy_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn sg_train_eval(
    features: *const SgFeatureMatrix,
    knn_k: usize,
    train_fraction: f64,
    n_repeats: usize,
    seed_split: u64,
    mean_accuracy_out: *mut f64,
    std_accuracy_out: *mut f64,
) -> SgStatus {
    let Some(features) = features.as_ref() else {
        return fail(SgStatus::SG_NULL_POINTER, "features must be non-null");
    };
    if mean_accuracy_out.is_null() {
        return fail(
            SgStatus::SG_NULL_POINTER,
            "mean_accuracy_out must be non-null",
        );
    }
    let mean_out = &mut *mean_accuracy_out;
    let std_out = std_accuracy_out.as_mut();
    guard(move || {
        if n_repeats == 0 {
            return fail(SgStatus::SG_INVALID_ARGUMENT, "n_repeats must be >= 1");
        }
        let run = || -> spikegest::Result<Vec<f64>> {
            let mut accuracies = Vec::with_capacity(n_repeats);
            for rep in 0..n_repeats {
                let rep_seed = derive_seed(seed_split, rep as u64);
                let split = split_dataset(&features.rows, train_fraction, rep_seed)?;
                let report = evaluate(
                    &split.train,
                    &split.test,
                    knn_k,
                    SplitDescriptor {
                        seed: rep_seed,
                        repetition: rep,
                    },
                )?;
                accuracies.push(report.accuracy);
            }
            Ok(accuracies)
        };
        match run() {
            Ok(accuracies) => {
                let n = accuracies.len() as f64;
                let mean = accuracies.iter().sum::<f64>() / n;
                *mean_out = mean;
                if let Some(std_out) = std_out {
                    *std_out = if accuracies.len() > 1 {
                        let var = accuracies
                            .iter()
                            .map(|a| (a - mean) * (a - mean))
                            .sum::<f64>()
                            / (n - 1.0);
                        var.sqrt()
                    } else {
                        0.0
                    };
                }
                SgStatus::SG_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}
