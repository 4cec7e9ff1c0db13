//! End-to-end orchestration: configuration, staged runs, and artifacts.
//!
//! A run loads or generates trials, windows them, encodes spikes, clusters
//! electrodes, extracts convolutional features, and evaluates a KNN over
//! several stratified splits. Four independent seeds (data, clustering,
//! kernels, split) control every random draw, so a config determines every
//! emitted byte.
//!
//! Configuration is a flat `key = value` text file; `#` starts a comment.
//! Unknown and duplicate keys are errors, and the stage parameters have no
//! built-in defaults: they must all be spelled out. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `mode` | `synth` or `files` |
//! | `window_len` | samples per analysis window (>= 3) |
//! | `theta_th` | encoder threshold (> 0) |
//! | `clusters` | `auto`, `fixed`, or a cluster count |
//! | `cluster_k_max` | optional elbow search bound (default: channels / 2, capped at 12) |
//! | `kernel_dim` | must be `3x3` |
//! | `temporal_stride` | kernel step along time (>= 1) |
//! | `channel_stride` | kernel step across channels (must be 1) |
//! | `tau_r` | plasticity learning-rate constant |
//! | `theta_conv` | IF neuron threshold (> 0) |
//! | `knn_k` | neighbor count (>= 1) |
//! | `train_fraction` | optional, in (0, 1), default 0.8 |
//! | `split_repeats` | optional repetition count, default 5 |
//! | `parallel` | optional `true`/`false`, default `true` |
//! | `seed_data`, `seed_clustering`, `seed_kernels`, `seed_split` | u64 seeds |
//! | `output_dir` | optional output directory |
//! | `signals`, `labels`, `layout`, `sample_rate` | files mode inputs |
//! | `synth_classes`, `synth_channels`, `synth_trials_per_class` | synth mode shape |
//! | `synth_noise` | optional noise std-dev, default 0.08 |
//! | `synth_blobs` | optional blob count or `auto` |
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{evaluate, split_dataset, EvalReport, SplitDescriptor};
use crate::conv_snn::{
    expected_feature_len, extract_dataset_features, FeatureVector, PlasticityParams,
};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::signal_io::{
    generate_synthetic_trials, load_trials, segment_trials, LabeledDataset, SynthParams,
    SyntheticData,
};
use crate::spatial_clustering::{
    elbow_select, fixed_assignment, kmeans, ClusterAssignment, ElbowResult,
};

const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
const DEFAULT_SPLIT_REPEATS: usize = 5;
const DEFAULT_SYNTH_NOISE: f64 = 0.08;

/// How the electrode clustering is obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterSpec {
    /// Elbow selection over a wcss curve.
    Auto,
    /// Copy the layout's fixed cluster map.
    Fixed,
    /// Exactly this many k-means clusters.
    K(usize),
}

/// Files-mode input locations.
#[derive(Debug, Clone, PartialEq)]
pub struct FilesConfig {
    pub signals: PathBuf,
    pub labels: PathBuf,
    pub layout: PathBuf,
    pub sample_rate: f64,
}

/// Synth-mode generator shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub channels: usize,
    pub trials_per_class: usize,
    pub noise: f64,
    pub blobs: Option<usize>,
}

/// Where the trials come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataMode {
    Synth(SynthConfig),
    Files(FilesConfig),
}

/// A fully validated pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: DataMode,
    pub window_len: usize,
    pub theta_th: f64,
    pub clusters: ClusterSpec,
    pub cluster_k_max: Option<usize>,
    pub temporal_stride: usize,
    pub channel_stride: usize,
    pub tau_r: f64,
    pub theta_conv: f64,
    pub knn_k: usize,
    pub train_fraction: f64,
    pub split_repeats: usize,
    pub parallel: bool,
    pub seed_data: u64,
    pub seed_clustering: u64,
    pub seed_kernels: u64,
    pub seed_split: u64,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn plasticity_params(&self) -> PlasticityParams {
        PlasticityParams {
            tau_r: self.tau_r,
            temporal_stride: self.temporal_stride,
            channel_stride: self.channel_stride,
        }
    }

    pub fn synth_params(&self) -> Result<SynthParams> {
        let DataMode::Synth(s) = &self.mode else {
            return Err(Error::Config(
                "config is not in synth mode (set mode = synth)".into(),
            ));
        };
        let mut p = SynthParams::new(
            s.classes,
            s.channels,
            s.trials_per_class,
            self.window_len,
            self.seed_data,
        );
        p.noise_amp = s.noise;
        p.n_blobs = s.blobs;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let check_pos = |name: &str, v: f64| -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
            Ok(())
        };
        check_pos("theta_th", self.theta_th)?;
        check_pos("theta_conv", self.theta_conv)?;
        if !self.tau_r.is_finite() {
            return Err(Error::Config("tau_r must be finite".into()));
        }
        if self.window_len < 3 {
            return Err(Error::Config("window_len must be >= 3".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(
                "train_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        if self.split_repeats == 0 {
            return Err(Error::Config("split_repeats must be >= 1".into()));
        }
        if let Some(k_max) = self.cluster_k_max {
            if k_max < 2 {
                return Err(Error::Config("cluster_k_max must be >= 2".into()));
            }
        }
        if let ClusterSpec::K(0) = self.clusters {
            return Err(Error::Config("clusters must be >= 1".into()));
        }
        self.plasticity_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let DataMode::Files(f) = &self.mode {
            if f.sample_rate <= 0.0 {
                return Err(Error::Config("sample_rate must be > 0".into()));
            }
        }
        Ok(())
    }

    /// The effective configuration as sorted `key = value` lines, defaults
    /// included; this is the snapshot recorded in the run manifest.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        match &self.mode {
            DataMode::Synth(s) => {
                push("mode", "synth".into());
                push("synth_classes", s.classes.to_string());
                push("synth_channels", s.channels.to_string());
                push("synth_trials_per_class", s.trials_per_class.to_string());
                push("synth_noise", s.noise.to_string());
                push(
                    "synth_blobs",
                    s.blobs.map_or_else(|| "auto".into(), |b| b.to_string()),
                );
            }
            DataMode::Files(f) => {
                push("mode", "files".into());
                push("signals", f.signals.display().to_string());
                push("labels", f.labels.display().to_string());
                push("layout", f.layout.display().to_string());
                push("sample_rate", f.sample_rate.to_string());
            }
        }
        push("window_len", self.window_len.to_string());
        push("theta_th", self.theta_th.to_string());
        push(
            "clusters",
            match &self.clusters {
                ClusterSpec::Auto => "auto".into(),
                ClusterSpec::Fixed => "fixed".into(),
                ClusterSpec::K(k) => k.to_string(),
            },
        );
        push(
            "cluster_k_max",
            self.cluster_k_max
                .map_or_else(|| "auto".into(), |k| k.to_string()),
        );
        push("kernel_dim", "3x3".into());
        push("temporal_stride", self.temporal_stride.to_string());
        push("channel_stride", self.channel_stride.to_string());
        push("tau_r", self.tau_r.to_string());
        push("theta_conv", self.theta_conv.to_string());
        push("knn_k", self.knn_k.to_string());
        push("train_fraction", self.train_fraction.to_string());
        push("split_repeats", self.split_repeats.to_string());
        push("parallel", self.parallel.to_string());
        push("seed_data", self.seed_data.to_string());
        push("seed_clustering", self.seed_clustering.to_string());
        push("seed_kernels", self.seed_kernels.to_string());
        push("seed_split", self.seed_split.to_string());
        if let Some(dir) = &self.output_dir {
            push("output_dir", dir.display().to_string());
        }
        kv.sort();
        kv
    }
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

struct KeyMap {
    values: BTreeMap<String, String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "key '{key}': expected true or false, got '{other}'"
        ))),
    }
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parses configuration text. Relative paths resolve against `base_dir`.
pub fn parse_config_text(text: &str, base_dir: &Path) -> Result<PipelineConfig> {
    let mut values = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if values.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("duplicate key '{key}'")));
        }
    }
    // Reject misspellings before any missing-key complaint: a typo would
    // otherwise surface as the wrong diagnostic.
    const KNOWN_KEYS: &[&str] = &[
        "mode",
        "synth_classes",
        "synth_channels",
        "synth_trials_per_class",
        "synth_noise",
        "synth_blobs",
        "signals",
        "labels",
        "layout",
        "sample_rate",
        "window_len",
        "theta_th",
        "clusters",
        "cluster_k_max",
        "kernel_dim",
        "temporal_stride",
        "channel_stride",
        "tau_r",
        "theta_conv",
        "knn_k",
        "train_fraction",
        "split_repeats",
        "parallel",
        "seed_data",
        "seed_clustering",
        "seed_kernels",
        "seed_split",
        "output_dir",
    ];
    if let Some(unknown) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key '{unknown}'")));
    }
    let mut map = KeyMap { values };

    let mode_raw = map.require("mode")?;
    let mode = match mode_raw.as_str() {
        "synth" => {
            let noise = match map.take("synth_noise") {
                Some(v) => parse_num::<f64>("synth_noise", &v)?,
                None => DEFAULT_SYNTH_NOISE,
            };
            let blobs = match map.take("synth_blobs") {
                None => None,
                Some(v) if v == "auto" => None,
                Some(v) => Some(parse_num::<usize>("synth_blobs", &v)?),
            };
            DataMode::Synth(SynthConfig {
                classes: parse_num("synth_classes", &map.require("synth_classes")?)?,
                channels: parse_num("synth_channels", &map.require("synth_channels")?)?,
                trials_per_class: parse_num(
                    "synth_trials_per_class",
                    &map.require("synth_trials_per_class")?,
                )?,
                noise,
                blobs,
            })
        }
        "files" => DataMode::Files(FilesConfig {
            signals: resolve(base_dir, &map.require("signals")?),
            labels: resolve(base_dir, &map.require("labels")?),
            layout: resolve(base_dir, &map.require("layout")?),
            sample_rate: parse_num("sample_rate", &map.require("sample_rate")?)?,
        }),
        other => {
            return Err(Error::Config(format!(
                "key 'mode': expected synth or files, got '{other}'"
            )))
        }
    };

    let kernel_dim = map.require("kernel_dim")?;
    if kernel_dim != "3x3" {
        return Err(Error::Config(format!(
            "key 'kernel_dim': only 3x3 kernels are supported, got '{kernel_dim}'"
        )));
    }

    let clusters_raw = map.require("clusters")?;
    let clusters = match clusters_raw.as_str() {
        "auto" => ClusterSpec::Auto,
        "fixed" => ClusterSpec::Fixed,
        n => ClusterSpec::K(parse_num("clusters", n)?),
    };

    let config = PipelineConfig {
        mode,
        window_len: parse_num("window_len", &map.require("window_len")?)?,
        theta_th: parse_num("theta_th", &map.require("theta_th")?)?,
        clusters,
        cluster_k_max: match map.take("cluster_k_max") {
            None => None,
            Some(v) if v == "auto" => None,
            Some(v) => Some(parse_num("cluster_k_max", &v)?),
        },
        temporal_stride: parse_num("temporal_stride", &map.require("temporal_stride")?)?,
        channel_stride: parse_num("channel_stride", &map.require("channel_stride")?)?,
        tau_r: parse_num("tau_r", &map.require("tau_r")?)?,
        theta_conv: parse_num("theta_conv", &map.require("theta_conv")?)?,
        knn_k: parse_num("knn_k", &map.require("knn_k")?)?,
        train_fraction: match map.take("train_fraction") {
            Some(v) => parse_num("train_fraction", &v)?,
            None => DEFAULT_TRAIN_FRACTION,
        },
        split_repeats: match map.take("split_repeats") {
            Some(v) => parse_num("split_repeats", &v)?,
            None => DEFAULT_SPLIT_REPEATS,
        },
        parallel: match map.take("parallel") {
            Some(v) => parse_bool("parallel", &v)?,
            None => true,
        },
        seed_data: parse_num("seed_data", &map.require("seed_data")?)?,
        seed_clustering: parse_num("seed_clustering", &map.require("seed_clustering")?)?,
        seed_kernels: parse_num("seed_kernels", &map.require("seed_kernels")?)?,
        seed_split: parse_num("seed_split", &map.require("seed_split")?)?,
        output_dir: map.take("output_dir").map(|v| resolve(base_dir, &v)),
    };

    // Whatever survived the upfront whitelist belongs to the other mode.
    if let Some(leftover) = map.values.keys().next() {
        return Err(Error::Config(format!(
            "key '{leftover}' does not apply to mode '{mode_raw}'"
        )));
    }
    config.validate()?;
    Ok(config)
}

/// Loads and validates a config file.
pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_text(&text, base)
}

// ---------------------------------------------------------------------------
// Staged execution
// ---------------------------------------------------------------------------

/// A loaded (or generated) windowed dataset plus bookkeeping.
pub struct StagedData {
    pub dataset: LabeledDataset,
    pub skipped_short_trials: usize,
    /// Present in synth mode, for exporting raw trials.
    pub synthetic: Option<SyntheticData>,
}

/// Runs the data stage: generate or load trials, then window them.
pub fn load_stage(config: &PipelineConfig) -> Result<StagedData> {
    let run = || -> Result<StagedData> {
        match &config.mode {
            DataMode::Synth(_) => {
                let params = config.synth_params()?;
                let data = generate_synthetic_trials(&params)?;
                let segmented = segment_trials(&data.trials, config.window_len)?;
                let dataset = LabeledDataset {
                    samples: segmented.samples,
                    classes: data.classes.clone(),
                    layout: data.layout.clone(),
                };
                dataset.validate()?;
                Ok(StagedData {
                    dataset,
                    skipped_short_trials: segmented.skipped_short,
                    synthetic: Some(data),
                })
            }
            DataMode::Files(f) => {
                let (trials, layout) =
                    load_trials(&f.signals, &f.labels, &f.layout, f.sample_rate)?;
                let segmented = segment_trials(&trials, config.window_len)?;
                let n_classes = trials.iter().map(|t| t.label).max().map_or(0, |m| m + 1);
                let dataset = LabeledDataset {
                    samples: segmented.samples,
                    classes: (0..n_classes).map(|c| format!("class{c}")).collect(),
                    layout,
                };
                dataset.validate()?;
                Ok(StagedData {
                    dataset,
                    skipped_short_trials: segmented.skipped_short,
                    synthetic: None,
                })
            }
        }
    };
    run().map_err(|e| e.in_stage("data"))
}

/// Runs the clustering stage for a dataset.
pub fn cluster_stage(
    config: &PipelineConfig,
    dataset: &LabeledDataset,
) -> Result<(ClusterAssignment, Option<ElbowResult>)> {
    let run = || -> Result<(ClusterAssignment, Option<ElbowResult>)> {
        let positions = dataset.layout.positions();
        match &config.clusters {
            ClusterSpec::K(k) => Ok((kmeans(&positions, *k, config.seed_clustering)?, None)),
            ClusterSpec::Fixed => Ok((fixed_assignment(&dataset.layout)?, None)),
            ClusterSpec::Auto => {
                let n = positions.len();
                // Default bound: the largest k that can still leave every
                // cluster its 3 channels, and at least 2.
                // The chord rule needs headroom past the knee, so search well
                // beyond the plausible cluster counts.
                let k_max = config
                    .cluster_k_max
                    .unwrap_or_else(|| (n / 2).clamp(2, 12))
                    .min(n);
                let elbow = elbow_select(&positions, k_max, config.seed_clustering)?;
                let k = elbow.selected_k;
                // Same per-k derived seed the elbow run used, so the final
                // assignment matches its curve entry.
                let assignment =
                    kmeans(&positions, k, derive_seed(config.seed_clustering, k as u64))?;
                Ok((assignment, Some(elbow)))
            }
        }
    };
    run().map_err(|e| e.in_stage("clustering"))
}

/// Aggregate results of one full run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub classes: Vec<String>,
    pub n_samples: usize,
    pub n_channels: usize,
    pub n_c: usize,
    pub feature_len: usize,
    pub skipped_short_trials: usize,
    /// Cluster count picked by the elbow rule, when `clusters = auto`.
    pub selected_k: Option<usize>,
    pub wcss: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub repetitions: Vec<EvalReport>,
    /// Element-wise sum of the repetition confusion matrices.
    pub combined_confusion: Vec<Vec<usize>>,
    pub split_warnings: Vec<String>,
}

/// Everything a run produced, before any files are written.
#[derive(Debug)]
pub struct PipelineRun {
    pub report: RunReport,
    pub clusters: ClusterAssignment,
    pub elbow: Option<ElbowResult>,
    pub features: Vec<FeatureVector>,
    /// Layout channel ids, parallel to `clusters.assignment`.
    pub channel_ids: Vec<String>,
    pub timings_ms: Vec<(&'static str, u128)>,
}

fn classify_stage(config: &PipelineConfig, features: &[FeatureVector]) -> Result<RunReportParts> {
    let run = || -> Result<RunReportParts> {
        let mut repetitions = Vec::with_capacity(config.split_repeats);
        let mut warnings: Vec<String> = Vec::new();
        for rep in 0..config.split_repeats {
            let rep_seed = derive_seed(config.seed_split, rep as u64);
            let split = split_dataset(features, config.train_fraction, rep_seed)?;
            for w in split.warnings {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            let report = evaluate(
                &split.train,
                &split.test,
                config.knn_k,
                SplitDescriptor {
                    seed: rep_seed,
                    repetition: rep,
                },
            )?;
            repetitions.push(report);
        }

        let n = repetitions.len() as f64;
        let mean = repetitions.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let std = if repetitions.len() > 1 {
            let var = repetitions
                .iter()
                .map(|r| (r.accuracy - mean) * (r.accuracy - mean))
                .sum::<f64>()
                / (n - 1.0);
            var.sqrt()
        } else {
            0.0
        };

        let dim = repetitions
            .iter()
            .map(EvalReport::n_classes)
            .max()
            .unwrap_or(0);
        let mut combined = vec![vec![0usize; dim]; dim];
        for rep in &repetitions {
            for (r, row) in rep.confusion.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    combined[r][c] += v;
                }
            }
        }

        Ok(RunReportParts {
            repetitions,
            mean,
            std,
            combined,
            warnings,
        })
    };
    run().map_err(|e| e.in_stage("classify"))
}

struct RunReportParts {
    repetitions: Vec<EvalReport>,
    mean: f64,
    std: f64,
    combined: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

/// Runs clustering, feature extraction, and classification on staged data.
pub fn run_stages(config: &PipelineConfig, staged: &StagedData) -> Result<PipelineRun> {
    let mut timings: Vec<(&'static str, u128)> = Vec::new();

    let t = Instant::now();
    let (clusters, elbow) = cluster_stage(config, &staged.dataset)?;
    timings.push(("clustering", t.elapsed().as_millis()));

    let t = Instant::now();
    let features = extract_dataset_features(
        &staged.dataset,
        &clusters,
        config.theta_th,
        config.seed_kernels,
        &config.plasticity_params(),
        config.theta_conv,
        config.parallel,
    )
    .map_err(|e| e.in_stage("features"))?;
    timings.push(("features", t.elapsed().as_millis()));

    let t = Instant::now();
    let parts = classify_stage(config, &features)?;
    timings.push(("classify", t.elapsed().as_millis()));

    let report = RunReport {
        classes: staged.dataset.classes.clone(),
        n_samples: staged.dataset.samples.len(),
        n_channels: staged.dataset.layout.n_channels(),
        n_c: clusters.n_c,
        feature_len: expected_feature_len(staged.dataset.layout.n_channels(), clusters.n_c),
        skipped_short_trials: staged.skipped_short_trials,
        selected_k: elbow.as_ref().map(|e| e.selected_k),
        wcss: clusters.wcss,
        mean_accuracy: parts.mean,
        std_accuracy: parts.std,
        repetitions: parts.repetitions,
        combined_confusion: parts.combined,
        split_warnings: parts.warnings,
    };

    Ok(PipelineRun {
        report,
        clusters,
        elbow,
        features,
        channel_ids: staged
            .dataset
            .layout
            .channels
            .iter()
            .map(|e| e.id.clone())
            .collect(),
        timings_ms: timings,
    })
}

/// Runs every stage in memory, writing nothing.
pub fn run_in_memory(config: &PipelineConfig) -> Result<PipelineRun> {
    let t = Instant::now();
    let staged = load_stage(config)?;
    let data_ms = t.elapsed().as_millis();
    let mut run = run_stages(config, &staged)?;
    run.timings_ms.insert(0, ("data", data_ms));
    Ok(run)
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// Record of one run: config snapshot, output hashes, timings.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub version: String,
    pub status: String,
    pub config: Vec<(String, String)>,
    /// `(file name, sha256 hex)` of every written output.
    pub outputs: Vec<(String, String)>,
    pub timings_ms: Vec<(String, u128)>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("run manifest\n");
        out.push_str(&format!("version: {}\n", self.version));
        out.push_str(&format!("status: {}\n", self.status));
        out.push_str("config:\n");
        for (k, v) in &self.config {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        out.push_str("outputs:\n");
        for (name, hash) in &self.outputs {
            out.push_str(&format!("  {name} sha256={hash}\n"));
        }
        out.push_str("timings_ms:\n");
        for (stage, ms) in &self.timings_ms {
            out.push_str(&format!("  {stage}: {ms}\n"));
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Exclusive marker preventing two runs from writing one directory at once.
/// Removed on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Validation(format!(
                    "output directory '{}' is locked by another run; remove '{}' if stale",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn float_csv(v: f64) -> String {
    v.to_string()
}

/// Feature matrix CSV: `sample_id,label,w0..w{n-1}`.
pub fn features_csv(features: &[FeatureVector]) -> String {
    let width = features.first().map_or(0, |f| f.values.len());
    let mut out = String::from("sample_id,label");
    for i in 0..width {
        out.push_str(&format!(",w{i}"));
    }
    out.push('\n');
    for f in features {
        out.push_str(&f.sample_id);
        out.push(',');
        out.push_str(&f.label.to_string());
        for v in &f.values {
            out.push(',');
            out.push_str(&float_csv(*v));
        }
        out.push('\n');
    }
    out
}

/// Cluster assignment CSV: `channel_id,cluster`.
pub fn assignment_csv(channel_ids: &[String], clusters: &ClusterAssignment) -> String {
    let mut out = String::from("channel_id,cluster\n");
    for (id, &c) in channel_ids.iter().zip(&clusters.assignment) {
        out.push_str(&format!("{id},{c}\n"));
    }
    out
}

/// Elbow curve CSV: `k,wcss`.
pub fn wcss_curve_csv(elbow: &ElbowResult) -> String {
    let mut out = String::from("k,wcss\n");
    for (i, w) in elbow.wcss_curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, float_csv(*w)));
    }
    out
}

/// Renders a confusion matrix as CSV (counts) and as text with row-normalized
/// percentages next to the counts.
pub fn render_confusion(matrix: &[Vec<usize>], class_names: &[String]) -> Result<(String, String)> {
    if matrix.len() != class_names.len() {
        return Err(Error::Parameter(format!(
            "{} class names for a {}-class confusion matrix",
            class_names.len(),
            matrix.len()
        )));
    }
    for row in matrix {
        if row.len() != matrix.len() {
            return Err(Error::Validation("confusion matrix is not square".into()));
        }
    }

    let mut csv = String::from("class");
    for name in class_names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (r, row) in matrix.iter().enumerate() {
        csv.push_str(&class_names[r]);
        for v in row {
            csv.push(',');
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }

    let cells: Vec<Vec<String>> = matrix
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&v| {
                    let pct = if total > 0 {
                        100.0 * v as f64 / total as f64
                    } else {
                        0.0
                    };
                    format!("{v} ({pct:.1}%)")
                })
                .collect()
        })
        .collect();
    let name_w = class_names
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("true\\pred".len());
    let cell_w = cells
        .iter()
        .flatten()
        .map(String::len)
        .chain(class_names.iter().map(String::len))
        .max()
        .unwrap_or(0);

    let mut text = format!("{:<name_w$}", "true\\pred");
    for name in class_names {
        text.push_str(&format!("  {name:>cell_w$}"));
    }
    text.push('\n');
    for (r, row) in cells.iter().enumerate() {
        text.push_str(&format!("{:<name_w$}", class_names[r]));
        for cell in row {
            text.push_str(&format!("  {cell:>cell_w$}"));
        }
        text.push('\n');
    }
    Ok((csv, text))
}

/// Renders one evaluation's confusion matrix with named classes.
pub fn report_confusion(report: &EvalReport, class_names: &[String]) -> Result<(String, String)> {
    render_confusion(&report.confusion, class_names)
}

fn write_artifact(
    dir: &Path,
    name: &str,
    content: &str,
    outputs: &mut Vec<(String, String)>,
) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    outputs.push((name.to_string(), sha256_hex(content.as_bytes())));
    Ok(())
}

fn manifest_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))
}

/// Runs the full pipeline and writes every artifact to the config's output
/// directory: `features.csv`, `assignment.csv`, `wcss_curve.csv` (elbow runs),
/// `report.json`, `confusion.csv`, and `manifest.txt`.
///
/// On failure a manifest is still written, flagging the failed stage and
/// listing whichever outputs were completed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(PipelineRun, RunManifest)> {
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir is required to run the pipeline".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let _lock = DirLock::acquire(&dir)?;

    let mut outputs: Vec<(String, String)> = Vec::new();
    let fail = |stage_err: &Error, outputs: &[(String, String)], timings: &[(&str, u128)]| {
        let manifest = RunManifest {
            version: manifest_version(),
            status: format!("failed: {stage_err}"),
            config: config.snapshot(),
            outputs: outputs.to_vec(),
            timings_ms: timings.iter().map(|&(s, ms)| (s.to_string(), ms)).collect(),
        };
        let _ = write_manifest(&dir, &manifest);
    };

    let run = match run_in_memory(config) {
        Ok(run) => run,
        Err(e) => {
            fail(&e, &outputs, &[]);
            return Err(e);
        }
    };

    let t = Instant::now();
    let mut write_all = || -> Result<()> {
        write_artifact(
            &dir,
            "features.csv",
            &features_csv(&run.features),
            &mut outputs,
        )?;
        write_artifact(
            &dir,
            "assignment.csv",
            &assignment_csv(&run.channel_ids, &run.clusters),
            &mut outputs,
        )?;
        if let Some(elbow) = &run.elbow {
            write_artifact(&dir, "wcss_curve.csv", &wcss_curve_csv(elbow), &mut outputs)?;
        }
        let report_json = serde_json::to_string_pretty(&run.report)
            .map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
        write_artifact(&dir, "report.json", &report_json, &mut outputs)?;
        let (confusion, _) = render_confusion(&run.report.combined_confusion, &run.report.classes)?;
        write_artifact(&dir, "confusion.csv", &confusion, &mut outputs)?;
        Ok(())
    };
    if let Err(e) = write_all() {
        let e = e.in_stage("write");
        fail(&e, &outputs, &run.timings_ms);
        return Err(e);
    }
    let mut timings = run.timings_ms.clone();
    timings.push(("write", t.elapsed().as_millis()));

    let manifest = RunManifest {
        version: manifest_version(),
        status: "ok".into(),
        config: config.snapshot(),
        outputs,
        timings_ms: timings.iter().map(|&(s, ms)| (s.to_string(), ms)).collect(),
    };
    write_manifest(&dir, &manifest)?;
    Ok((run, manifest))
}

// ---------------------------------------------------------------------------
// Cluster sweep
// ---------------------------------------------------------------------------

/// One row of a cluster-count sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub feasible: bool,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub note: String,
}

/// Runs the full pipeline once per cluster count, holding every seed fixed so
/// the curve isolates the effect of clustering. Infeasible counts (too few
/// channels per cluster, or more clusters than channels) are recorded, not
/// fatal.
pub fn sweep_clusters(config: &PipelineConfig, k_range: &[usize]) -> Result<Vec<SweepRow>> {
    let staged = load_stage(config)?;
    let n_channels = staged.dataset.layout.n_channels();

    let mut rows = Vec::with_capacity(k_range.len());
    for &k in k_range {
        if k == 0 || k > n_channels {
            rows.push(SweepRow {
                k,
                feasible: false,
                mean_accuracy: None,
                std_accuracy: None,
                note: format!("k outside [1, {n_channels}]"),
            });
            continue;
        }
        let mut variant = config.clone();
        variant.clusters = ClusterSpec::K(k);
        match run_stages(&variant, &staged) {
            Ok(run) => rows.push(SweepRow {
                k,
                feasible: true,
                mean_accuracy: Some(run.report.mean_accuracy),
                std_accuracy: Some(run.report.std_accuracy),
                note: String::new(),
            }),
            Err(e) if is_topology_error(&e) => rows.push(SweepRow {
                k,
                feasible: false,
                mean_accuracy: None,
                std_accuracy: None,
                note: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

fn is_topology_error(e: &Error) -> bool {
    match e {
        Error::Topology(_) => true,
        Error::Stage { source, .. } => is_topology_error(source),
        Error::Validation(msg) => msg.contains("kernels need at least 3"),
        _ => false,
    }
}

/// Sweep table CSV: `k,feasible,mean_accuracy,std_accuracy,note`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,feasible,mean_accuracy,std_accuracy,note\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k,
            r.feasible,
            r.mean_accuracy.map_or_else(String::new, float_csv),
            r.std_accuracy.map_or_else(String::new, float_csv),
            r.note.replace(',', ";")
        ));
    }
    out
}
