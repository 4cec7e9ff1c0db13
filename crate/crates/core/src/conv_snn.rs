//! Convolutional spiking layer and feature extraction.
//!
//! Each cluster's spike raster is scanned by 3x3 kernels (3 adjacent channels
//! x 3 consecutive timesteps, one kernel per contiguous channel window). A
//! kernel's convolution output drives a leak-free integrate-and-fire neuron;
//! whenever that neuron fires, the kernel's weights move under an event-driven
//! update whose magnitude depends on each input spike's sign and lag. After a
//! sample's full scan the adapted weights themselves are the features: all
//! kernels concatenate to a vector of length 9 * (n_e - 2 * n_c).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal_io::LabeledDataset;
use crate::spatial_clustering::ClusterAssignment;
use crate::spike_encoding::{encode_sample, SpikeRaster};

/// Upper bound (exclusive) of the shared uniform initial weight draw.
pub const W0_SCALE: f64 = 0.1;

/// One 3x3 convolution kernel over a 3-channel window of one cluster.
///
/// Rows are channel offsets 0..2 within the window; column `j` holds the
/// input at lag `2 - j`, so the rightmost column is the current timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub weights: [[f64; 3]; 3],
    pub cluster: usize,
    /// Offset of the window within the cluster's ascending member list.
    pub window_start: usize,
    /// Global channel indices covered, ascending.
    pub channels: [usize; 3],
}

/// Integrate-and-fire neuron without leak: potential persists across steps and
/// resets only on a threshold crossing.
#[derive(Debug, Clone)]
pub struct IFNeuron {
    pub v: f64,
    pub theta: f64,
}

impl IFNeuron {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Parameter(format!(
                "theta_conv must be finite and > 0, got {theta}"
            )));
        }
        Ok(Self { v: 0.0, theta })
    }

    /// Integrates one drive value and returns the emitted spike.
    pub fn step(&mut self, drive: f64) -> i8 {
        self.v += drive;
        let spike = if self.v >= self.theta {
            1
        } else if self.v <= -self.theta {
            -1
        } else {
            0
        };
        if spike != 0 {
            self.v = 0.0;
        }
        debug_assert!(self.v.abs() < self.theta);
        spike
    }
}

/// Strides and learning rate of the convolution/plasticity stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityParams {
    pub tau_r: f64,
    pub temporal_stride: usize,
    pub channel_stride: usize,
}

impl PlasticityParams {
    pub fn validate(&self) -> Result<()> {
        if !self.tau_r.is_finite() {
            return Err(Error::Parameter("tau_r must be finite".into()));
        }
        if self.temporal_stride == 0 {
            return Err(Error::Parameter("temporal_stride must be >= 1".into()));
        }
        if self.channel_stride != 1 {
            // Kernel windows are contiguous 3-channel spans; the feature
            // dimension 9 * (n_e - 2 * n_c) only holds at channel stride 1.
            return Err(Error::Parameter(format!(
                "channel_stride must be 1, got {}",
                self.channel_stride
            )));
        }
        Ok(())
    }
}

/// All kernels of one topology plus the shared initial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
    /// The initial matrix every kernel starts from.
    pub w0: [[f64; 3]; 3],
}

impl KernelBank {
    pub fn feature_len(&self) -> usize {
        self.kernels.len() * 9
    }

    /// Concatenates kernel weights in canonical order: clusters ascending,
    /// windows by start ascending, each kernel row-major.
    pub fn concat(&self) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.feature_len());
        for kernel in &self.kernels {
            for row in &kernel.weights {
                values.extend_from_slice(row);
            }
        }
        values
    }
}

/// Feature length for a topology of `n_e` channels in `n_c` clusters.
pub fn expected_feature_len(n_e: usize, n_c: usize) -> usize {
    9 * (n_e - 2 * n_c)
}

/// Convolution step count for a raster of `t` timesteps at `stride`.
pub fn n_conv_steps(t: usize, stride: usize) -> usize {
    (t - 3) / stride + 1
}

/// Builds the kernel bank for a clustering: one kernel per contiguous
/// 3-channel window (stride 1) of each cluster's ascending member list, all
/// sharing one W0 drawn uniformly from [0, 0.1).
///
/// W0 entries are drawn row-major; the draw order is part of the determinism
/// contract.
pub fn init_kernel_bank(clusters: &ClusterAssignment, seed: u64) -> Result<KernelBank> {
    clusters.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w0 = [[0.0f64; 3]; 3];
    for row in &mut w0 {
        for w in row.iter_mut() {
            *w = rng.random_range(0.0..W0_SCALE);
        }
    }

    let mut kernels = Vec::new();
    for cluster in 0..clusters.n_c {
        let members = clusters.members(cluster);
        if members.len() < 3 {
            return Err(Error::Topology(format!(
                "cluster {cluster} has {} channels; kernels need at least 3",
                members.len()
            )));
        }
        for start in 0..=(members.len() - 3) {
            kernels.push(Kernel {
                weights: w0,
                cluster,
                window_start: start,
                channels: [members[start], members[start + 1], members[start + 2]],
            });
        }
    }

    let n_e = clusters.assignment.len();
    debug_assert_eq!(kernels.len(), n_e - 2 * clusters.n_c);
    Ok(KernelBank { kernels, w0 })
}

/// One convolution step: accumulates the 3x3 dot product into the neuron and
/// returns its spike. Accumulation order is row-major; this is part of the
/// reproducibility contract.
pub fn conv_step(kernel: &Kernel, patch: &[[i8; 3]; 3], neuron: &mut IFNeuron) -> i8 {
    let mut drive = 0.0f64;
    for (wrow, prow) in kernel.weights.iter().zip(patch) {
        for (&w, &s) in wrow.iter().zip(prow) {
            drive += w * f64::from(s);
        }
    }
    neuron.step(drive)
}

/// Event-driven weight update after an output spike.
///
/// For every input spike in the patch, with lag `d = 2 - j` for column `j`:
/// a +1 input contributes magnitude `exp(-d - tau_r)`, a -1 input
/// `exp(-(d + tau_r)^2)`; the signed output spike scales both. Silent patch
/// positions are untouched.
pub fn apply_plasticity(
    kernel: &mut Kernel,
    patch: &[[i8; 3]; 3],
    output_spike: i8,
    tau_r: f64,
) -> Result<()> {
    if output_spike == 0 {
        return Err(Error::Validation(
            "apply_plasticity called without an output spike".into(),
        ));
    }
    let out = f64::from(output_spike);
    for (wrow, prow) in kernel.weights.iter_mut().zip(patch) {
        for (j, (w, &s)) in wrow.iter_mut().zip(prow).enumerate() {
            if s == 0 {
                continue;
            }
            let d = (2 - j) as f64;
            let m = if s > 0 {
                (-d - tau_r).exp()
            } else {
                (-(d + tau_r) * (d + tau_r)).exp()
            };
            *w += out * m;
        }
    }
    Ok(())
}

/// Runs the convolutional layer over one raster and returns the concatenated
/// adapted weights (length 9 * (n_e - 2 * n_c)).
///
/// Kernels start from the shared W0 for every sample, so features of
/// different samples are directly comparable.
pub fn extract_features(
    raster: &SpikeRaster,
    clusters: &ClusterAssignment,
    bank_seed: u64,
    params: &PlasticityParams,
    theta_conv: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if raster.n_channels() != clusters.assignment.len() {
        return Err(Error::Validation(format!(
            "raster has {} channels, clustering covers {}",
            raster.n_channels(),
            clusters.assignment.len()
        )));
    }
    let t = raster.n_timesteps();
    if t < 3 {
        return Err(Error::Validation(format!(
            "raster has {t} timesteps; a kernel window needs at least 3"
        )));
    }

    let mut bank = init_kernel_bank(clusters, bank_seed)?;
    let n_steps = n_conv_steps(t, params.temporal_stride);
    for kernel in &mut bank.kernels {
        let mut neuron = IFNeuron::new(theta_conv)?;
        for s in 0..n_steps {
            let t0 = s * params.temporal_stride;
            let mut patch = [[0i8; 3]; 3];
            for (i, row) in patch.iter_mut().enumerate() {
                let series = &raster.channels[kernel.channels[i]];
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = series[t0 + j];
                }
            }
            let spike = conv_step(kernel, &patch, &mut neuron);
            if spike != 0 {
                apply_plasticity(kernel, &patch, spike, params.tau_r)?;
            }
        }
    }
    Ok(bank.concat())
}

/// A sample's feature vector with its identity and label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub sample_id: String,
    pub label: usize,
}

/// Normalizes, encodes, and extracts features for every sample of a dataset,
/// preserving sample order. With `parallel` the samples are processed by a
/// thread pool; outputs are bit-identical to the sequential path.
#[allow(clippy::too_many_arguments)]
pub fn extract_dataset_features(
    dataset: &LabeledDataset,
    clusters: &ClusterAssignment,
    theta_th: f64,
    bank_seed: u64,
    params: &PlasticityParams,
    theta_conv: f64,
    parallel: bool,
) -> Result<Vec<FeatureVector>> {
    dataset.validate()?;
    let per_sample = |sample: &crate::signal_io::Sample| -> Result<FeatureVector> {
        let run = || -> Result<FeatureVector> {
            let normalized = crate::signal_io::normalize_sample(sample);
            let raster = encode_sample(&normalized, theta_th)?;
            let values = extract_features(&raster, clusters, bank_seed, params, theta_conv)?;
            Ok(FeatureVector {
                values,
                sample_id: sample.id(),
                label: sample.label,
            })
        };
        run().map_err(|e| Error::Validation(format!("sample '{}': {e}", sample.id())))
    };

    if parallel {
        dataset.samples.par_iter().map(per_sample).collect()
    } else {
        dataset.samples.iter().map(per_sample).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{generate_synthetic, SynthParams};
    use crate::spatial_clustering::kmeans;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_cluster(n: usize) -> ClusterAssignment {
        ClusterAssignment {
            assignment: vec![0; n],
            centroids: vec![[0.0; 3]],
            wcss: 0.0,
            n_c: 1,
            remap: None,
        }
    }

    fn params() -> PlasticityParams {
        PlasticityParams {
            tau_r: 5.0,
            temporal_stride: 3,
            channel_stride: 1,
        }
    }

    fn random_raster(channels: usize, t: usize, seed: u64) -> SpikeRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikeRaster {
            channels: (0..channels)
                .map(|_| (0..t).map(|_| rng.random_range(-1i8..=1)).collect())
                .collect(),
        }
    }

    #[test]
    fn bank_size_follows_dimension_formula() {
        // Five clusters of sizes 6,5,4,5,5: 25 channels -> 15 kernels.
        let mut assignment = Vec::new();
        for (c, size) in [6, 5, 4, 5, 5].into_iter().enumerate() {
            assignment.extend(std::iter::repeat_n(c, size));
        }
        let clusters = ClusterAssignment {
            assignment,
            centroids: vec![[0.0; 3]; 5],
            wcss: 0.0,
            n_c: 5,
            remap: None,
        };
        let bank = init_kernel_bank(&clusters, 1).unwrap();
        assert_eq!(bank.kernels.len(), 15);
        assert_eq!(bank.feature_len(), 135);
        assert_eq!(expected_feature_len(25, 5), 135);
    }

    #[test]
    fn three_channel_cluster_yields_one_kernel() {
        let bank = init_kernel_bank(&single_cluster(3), 1).unwrap();
        assert_eq!(bank.kernels.len(), 1);
        assert_eq!(bank.kernels[0].channels, [0, 1, 2]);
    }

    #[test]
    fn undersized_cluster_is_a_topology_error() {
        let err = init_kernel_bank(&single_cluster(2), 1).unwrap_err();
        match err {
            Error::Topology(msg) => assert!(msg.contains("cluster 0"), "{msg}"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn w0_is_shared_deterministic_and_in_range() {
        let a = init_kernel_bank(&single_cluster(5), 42).unwrap();
        let b = init_kernel_bank(&single_cluster(5), 42).unwrap();
        assert_eq!(a.w0, b.w0);
        for kernel in &a.kernels {
            assert_eq!(kernel.weights, a.w0);
        }
        for row in &a.w0 {
            for &w in row {
                assert!((0.0..W0_SCALE).contains(&w));
            }
        }
    }

    #[test]
    fn neuron_accumulates_without_leak() {
        // Uniform weights 0.05, threshold 0.1, one +1 input per step.
        let kernel = Kernel {
            weights: [[0.05; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        let mut neuron = IFNeuron::new(0.1).unwrap();
        let mut patch = [[0i8; 3]; 3];
        patch[1][2] = 1;
        assert_eq!(conv_step(&kernel, &patch, &mut neuron), 0);
        assert_relative_eq!(neuron.v, 0.05);
        assert_eq!(conv_step(&kernel, &patch, &mut neuron), 1);
        assert_eq!(neuron.v, 0.0);
    }

    #[test]
    fn zero_patch_changes_nothing() {
        let kernel = Kernel {
            weights: [[0.05; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        let mut neuron = IFNeuron::new(0.1).unwrap();
        neuron.v = 0.07;
        assert_eq!(conv_step(&kernel, &[[0; 3]; 3], &mut neuron), 0);
        assert_eq!(neuron.v, 0.07);
    }

    #[test]
    fn negative_threshold_crossing_emits_negative_spike() {
        let kernel = Kernel {
            weights: [[0.05; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        let mut neuron = IFNeuron::new(0.1).unwrap();
        let mut patch = [[0i8; 3]; 3];
        patch[0][0] = -1;
        patch[2][1] = -1;
        assert_eq!(conv_step(&kernel, &patch, &mut neuron), -1);
        assert_eq!(neuron.v, 0.0);
    }

    #[test]
    fn update_magnitudes_match_rule() {
        let mut kernel = Kernel {
            weights: [[0.0; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        // +1 input at lag 0 (column 2), positive output.
        let mut patch = [[0i8; 3]; 3];
        patch[0][2] = 1;
        apply_plasticity(&mut kernel, &patch, 1, 5.0).unwrap();
        assert_eq!(kernel.weights[0][2], (-5.0f64).exp());
        assert_relative_eq!(kernel.weights[0][2], 6.7379e-3, max_relative = 1e-4);

        // -1 input at lag 0, positive output.
        let mut kernel2 = kernel.clone();
        kernel2.weights = [[0.0; 3]; 3];
        patch = [[0i8; 3]; 3];
        patch[1][2] = -1;
        apply_plasticity(&mut kernel2, &patch, 1, 5.0).unwrap();
        assert_eq!(kernel2.weights[1][2], (-25.0f64).exp());
        assert_relative_eq!(kernel2.weights[1][2], 1.39e-11, max_relative = 1e-2);

        // +1 input at lag 1 (column 1), negative output depresses.
        let mut kernel3 = kernel.clone();
        kernel3.weights = [[0.0; 3]; 3];
        patch = [[0i8; 3]; 3];
        patch[2][1] = 1;
        apply_plasticity(&mut kernel3, &patch, -1, 5.0).unwrap();
        assert_eq!(kernel3.weights[2][1], -(-6.0f64).exp());
        assert_relative_eq!(kernel3.weights[2][1], -2.4788e-3, max_relative = 1e-4);
    }

    #[test]
    fn silent_patch_positions_are_untouched() {
        let mut kernel = Kernel {
            weights: [[0.3; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        let mut patch = [[0i8; 3]; 3];
        patch[1][1] = 1;
        apply_plasticity(&mut kernel, &patch, 1, 5.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    assert_eq!(kernel.weights[i][j], 0.3);
                }
            }
        }
        assert!(kernel.weights[1][1] > 0.3);
    }

    #[test]
    fn plasticity_without_output_spike_is_rejected() {
        let mut kernel = Kernel {
            weights: [[0.0; 3]; 3],
            cluster: 0,
            window_start: 0,
            channels: [0, 1, 2],
        };
        let patch = [[1i8; 3]; 3];
        assert!(apply_plasticity(&mut kernel, &patch, 0, 5.0).is_err());
    }

    #[test]
    fn update_magnitudes_only_take_tabulated_values() {
        // With tau_r = 5 every positive-input update is one of e^-5, e^-6,
        // e^-7 and every negative-input update one of e^-25, e^-36, e^-49.
        let allowed_pos = [(-5.0f64).exp(), (-6.0f64).exp(), (-7.0f64).exp()];
        let allowed_neg = [(-25.0f64).exp(), (-36.0f64).exp(), (-49.0f64).exp()];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut patch = [[0i8; 3]; 3];
            for row in &mut patch {
                for cell in row.iter_mut() {
                    *cell = rng.random_range(-1i8..=1);
                }
            }
            let output = if rng.random_range(0..2) == 0 { 1 } else { -1 };
            let mut kernel = Kernel {
                weights: [[0.0; 3]; 3],
                cluster: 0,
                window_start: 0,
                channels: [0, 1, 2],
            };
            apply_plasticity(&mut kernel, &patch, output, 5.0).unwrap();
            for (wrow, prow) in kernel.weights.iter().zip(&patch) {
                for (&w, &s) in wrow.iter().zip(prow) {
                    let dw = w * f64::from(output);
                    match s {
                        0 => assert_eq!(dw, 0.0),
                        1 => assert!(allowed_pos.contains(&dw), "dw = {dw}"),
                        _ => assert!(allowed_neg.contains(&dw), "dw = {dw}"),
                    }
                }
            }
        }
    }

    #[test]
    fn step_count_formula() {
        assert_eq!(n_conv_steps(1000, 3), 333);
        assert_eq!(n_conv_steps(3, 1), 1);
        assert_eq!(n_conv_steps(3, 3), 1);
        assert_eq!(n_conv_steps(4, 3), 1);
        assert_eq!(n_conv_steps(6, 3), 2);
        assert_eq!(n_conv_steps(30, 3), 10);
    }

    #[test]
    fn all_zero_raster_returns_w0_everywhere() {
        let clusters = single_cluster(5);
        let raster = SpikeRaster {
            channels: vec![vec![0i8; 60]; 5],
        };
        let features = extract_features(&raster, &clusters, 3, &params(), 0.1).unwrap();
        let bank = init_kernel_bank(&clusters, 3).unwrap();
        let w0_flat: Vec<f64> = bank.w0.iter().flatten().copied().collect();
        assert_eq!(features.len(), bank.feature_len());
        for kernel_weights in features.chunks(9) {
            assert_eq!(kernel_weights, &w0_flat[..]);
        }
    }

    #[test]
    fn matches_naive_reference_exactly() {
        // Independent re-implementation: explicit loops, no shared helpers.
        #[allow(clippy::needless_range_loop)]
        fn naive(raster: &[Vec<i8>], seed: u64, tau_r: f64, stride: usize, theta: f64) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w0 = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    w0[i][j] = rng.random_range(0.0..0.1);
                }
            }
            let t = raster[0].len();
            let n_windows = raster.len() - 2;
            let mut out = Vec::new();
            for w in 0..n_windows {
                let mut weights = w0;
                let mut v = 0.0f64;
                let mut t0 = 0usize;
                while t0 + 2 < t {
                    let mut acc = 0.0f64;
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += weights[i][j] * raster[w + i][t0 + j] as f64;
                        }
                    }
                    v += acc;
                    let spike = if v >= theta {
                        v = 0.0;
                        1.0
                    } else if v <= -theta {
                        v = 0.0;
                        -1.0
                    } else {
                        0.0
                    };
                    if spike != 0.0 {
                        for i in 0..3 {
                            for j in 0..3 {
                                let s = raster[w + i][t0 + j];
                                if s == 1 {
                                    weights[i][j] += spike * (-(2.0 - j as f64) - tau_r).exp();
                                } else if s == -1 {
                                    let b = 2.0 - j as f64 + tau_r;
                                    weights[i][j] += spike * (-(b * b)).exp();
                                }
                            }
                        }
                    }
                    t0 += stride;
                }
                for i in 0..3 {
                    for j in 0..3 {
                        out.push(weights[i][j]);
                    }
                }
            }
            out
        }

        let raster = random_raster(4, 30, 99);
        let clusters = single_cluster(4);
        let p = PlasticityParams {
            tau_r: 5.0,
            temporal_stride: 1,
            channel_stride: 1,
        };
        let got = extract_features(&raster, &clusters, 11, &p, 0.1).unwrap();
        let want = naive(&raster.channels, 11, 5.0, 1, 0.1);
        assert_eq!(got, want, "bit-exact agreement with the naive reference");

        let p3 = params();
        let got3 = extract_features(&raster, &clusters, 11, &p3, 0.1).unwrap();
        let want3 = naive(&raster.channels, 11, 5.0, 3, 0.1);
        assert_eq!(got3, want3);
    }

    #[test]
    fn locality_distant_channels_cannot_move_other_kernels() {
        // Two clusters of 3 channels each: one kernel per cluster. Spikes only
        // in cluster 0's channels leave cluster 1's kernel at W0.
        let clusters = ClusterAssignment {
            assignment: vec![0, 0, 0, 1, 1, 1],
            centroids: vec![[0.0; 3]; 2],
            wcss: 0.0,
            n_c: 2,
            remap: None,
        };
        let mut raster = SpikeRaster {
            channels: vec![vec![0i8; 30]; 6],
        };
        let active = random_raster(3, 30, 5);
        for ch in 0..3 {
            raster.channels[ch] = active.channels[ch].clone();
        }
        let features = extract_features(&raster, &clusters, 21, &params(), 0.05).unwrap();
        let bank = init_kernel_bank(&clusters, 21).unwrap();
        let w0_flat: Vec<f64> = bank.w0.iter().flatten().copied().collect();
        assert_eq!(features.len(), 18);
        assert_ne!(&features[0..9], &w0_flat[..], "active kernel adapted");
        assert_eq!(&features[9..18], &w0_flat[..], "silent kernel untouched");
    }

    #[test]
    fn per_sample_isolation() {
        let raster_a = random_raster(5, 40, 1);
        let raster_b = random_raster(5, 40, 2);
        let clusters = single_cluster(5);
        let first = extract_features(&raster_a, &clusters, 9, &params(), 0.1).unwrap();
        let _ = extract_features(&raster_b, &clusters, 9, &params(), 0.1).unwrap();
        let again = extract_features(&raster_a, &clusters, 9, &params(), 0.1).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn short_raster_is_rejected() {
        let raster = SpikeRaster {
            channels: vec![vec![0i8; 2]; 3],
        };
        assert!(extract_features(&raster, &single_cluster(3), 0, &params(), 0.1).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let p = SynthParams::new(3, 9, 4, 60, 13);
        let dataset = generate_synthetic(&p).unwrap();
        let clusters = kmeans(&dataset.layout.positions(), 3, 2).unwrap();
        let seq =
            extract_dataset_features(&dataset, &clusters, 0.22, 8, &params(), 0.1, false).unwrap();
        let par =
            extract_dataset_features(&dataset, &clusters, 0.22, 8, &params(), 0.1, true).unwrap();
        assert_eq!(seq.len(), par.len());
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.sample_id, b.sample_id);
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn dataset_features_carry_ids_and_labels_in_order() {
        let p = SynthParams::new(2, 6, 2, 30, 3);
        let dataset = generate_synthetic(&p).unwrap();
        let clusters = kmeans(&dataset.layout.positions(), 2, 2).unwrap();
        let feats =
            extract_dataset_features(&dataset, &clusters, 0.22, 8, &params(), 0.1, false).unwrap();
        assert_eq!(feats.len(), dataset.samples.len());
        for (f, s) in feats.iter().zip(&dataset.samples) {
            assert_eq!(f.sample_id, s.id());
            assert_eq!(f.label, s.label);
            assert_eq!(f.values.len(), expected_feature_len(6, 2));
        }
    }
}
