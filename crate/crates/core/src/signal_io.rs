//! Trial ingestion, segmentation, normalization, and synthetic data.
//!
//! Import formats (all CSV, '.' decimal separator, header row required):
//!
//! - signals: one row per timestep, one column per channel, header = channel ids
//! - labels: `trial_id,start_timestep,end_timestep,label[,subject]`
//!   (end exclusive)
//! - layout: `channel_id,x,y,z[,cluster]`
//!
//! The synthetic generator stands in for real ECoG/EEG corpora at desk scale:
//! classes are distinct mixtures of sinusoids per electrode group, electrodes
//! sit in spatially separated 3-D blobs, and every random draw derives from
//! one seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seeds::{derive_seed, derive_seed2};

/// One labeled movement window cut from a recording.
#[derive(Debug, Clone)]
pub struct Trial {
    pub id: String,
    /// Amplitudes, `signal[channel][timestep]`.
    pub signal: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub label: usize,
    pub subject: String,
}

impl Trial {
    pub fn n_channels(&self) -> usize {
        self.signal.len()
    }

    pub fn n_timesteps(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate <= 0.0 {
            return Err(Error::Validation(format!(
                "trial '{}': sample_rate must be > 0",
                self.id
            )));
        }
        if self.n_timesteps() == 0 {
            return Err(Error::Validation(format!(
                "trial '{}': empty signal",
                self.id
            )));
        }
        let t = self.n_timesteps();
        if self.signal.iter().any(|ch| ch.len() != t) {
            return Err(Error::Validation(format!(
                "trial '{}': channels have unequal timestep counts",
                self.id
            )));
        }
        Ok(())
    }
}

/// A fixed-length window of one trial.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Amplitudes, `signal[channel][timestep]`, all channels exactly `window_len` long.
    pub signal: Vec<Vec<f64>>,
    pub label: usize,
    pub trial_id: String,
    pub window_index: usize,
}

impl Sample {
    pub fn n_channels(&self) -> usize {
        self.signal.len()
    }

    pub fn n_timesteps(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    /// Stable identifier: trial id plus window index.
    pub fn id(&self) -> String {
        format!("{}#{}", self.trial_id, self.window_index)
    }
}

/// One electrode: id plus 3-D coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    pub id: String,
    pub position: [f64; 3],
}

/// Electrode geometry, optionally carrying a fixed cluster map (EEG-style montage).
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    pub channels: Vec<Electrode>,
    /// Cluster index per channel, parallel to `channels`. Present for montages
    /// whose grouping is given up front instead of learned by k-means.
    pub fixed_clusters: Option<Vec<usize>>,
}

impl ElectrodeLayout {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.channels.iter().map(|e| e.position).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.channels {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate channel id '{}' in layout",
                    e.id
                )));
            }
            if e.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "channel '{}' has non-finite coordinates",
                    e.id
                )));
            }
        }
        if let Some(map) = &self.fixed_clusters {
            if map.len() != self.channels.len() {
                return Err(Error::Validation(format!(
                    "fixed cluster map covers {} channels, layout has {}",
                    map.len(),
                    self.channels.len()
                )));
            }
        }
        Ok(())
    }
}

/// Samples plus class names plus the electrode geometry they were recorded on.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub classes: Vec<String>,
    pub layout: ElectrodeLayout,
}

impl LabeledDataset {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let n_ch = self.layout.n_channels();
        for s in &self.samples {
            if s.n_channels() != n_ch {
                return Err(Error::Validation(format!(
                    "sample '{}' has {} channels, layout has {}",
                    s.id(),
                    s.n_channels(),
                    n_ch
                )));
            }
            if s.label >= self.classes.len() {
                return Err(Error::Validation(format!(
                    "sample '{}' label {} out of range for {} classes",
                    s.id(),
                    s.label,
                    self.classes.len()
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

fn parse_f64(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("field '{field}': invalid number '{raw}'"),
        )
    })
}

fn parse_usize(path: &Path, line: u64, field: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("field '{field}': invalid non-negative integer '{raw}'"),
        )
    })
}

/// Reads an electrode layout CSV (`channel_id,x,y,z[,cluster]`).
pub fn load_layout(path: &Path) -> Result<ElectrodeLayout> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let header_vec: Vec<&str> = headers.iter().collect();
    let has_cluster = match header_vec.as_slice() {
        ["channel_id", "x", "y", "z"] => false,
        ["channel_id", "x", "y", "z", "cluster"] => true,
        other => {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "expected header 'channel_id,x,y,z[,cluster]', found '{}'",
                    other.join(",")
                ),
            ))
        }
    };

    let mut channels = Vec::new();
    let mut clusters = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "field 'channel_id': empty"));
        }
        let x = parse_f64(path, line, "x", &record[1])?;
        let y = parse_f64(path, line, "y", &record[2])?;
        let z = parse_f64(path, line, "z", &record[3])?;
        channels.push(Electrode {
            id,
            position: [x, y, z],
        });
        if has_cluster {
            clusters.push(parse_usize(path, line, "cluster", &record[4])?);
        }
    }

    let layout = ElectrodeLayout {
        channels,
        fixed_clusters: if has_cluster { Some(clusters) } else { None },
    };
    layout.validate()?;
    Ok(layout)
}

/// Reads a signals CSV into per-channel series, reordered to `layout` channel order.
fn load_signals(path: &Path, layout: &ElectrodeLayout) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let file_ids: Vec<String> = headers.iter().map(str::to_string).collect();

    if file_ids.len() != layout.n_channels() {
        return Err(Error::Validation(format!(
            "signals file '{}' has {} channels, layout has {}",
            path.display(),
            file_ids.len(),
            layout.n_channels()
        )));
    }
    // Column of each layout channel in the file.
    let mut col_of = Vec::with_capacity(layout.n_channels());
    for e in &layout.channels {
        let col = file_ids.iter().position(|id| *id == e.id).ok_or_else(|| {
            Error::Validation(format!(
                "layout channel '{}' missing from signals file '{}'",
                e.id,
                path.display()
            ))
        })?;
        col_of.push(col);
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); file_ids.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != file_ids.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", file_ids.len(), record.len()),
            ));
        }
        for (c, raw) in record.iter().enumerate() {
            columns[c].push(parse_f64(path, line, &file_ids[c], raw)?);
        }
    }

    Ok(col_of
        .into_iter()
        .map(|c| std::mem::take(&mut columns[c]))
        .collect())
}

/// Loads trials and electrode geometry from the import CSV formats.
///
/// Each labels row becomes one [`Trial`] slicing `[start_timestep, end_timestep)`
/// out of the signals file. `sample_rate` is recorded on every trial.
pub fn load_trials(
    signals_path: &Path,
    labels_path: &Path,
    layout_path: &Path,
    sample_rate: f64,
) -> Result<(Vec<Trial>, ElectrodeLayout)> {
    if sample_rate <= 0.0 {
        return Err(Error::Parameter("sample_rate must be > 0".into()));
    }
    let layout = load_layout(layout_path)?;
    let signals = load_signals(signals_path, &layout)?;
    let total_t = signals.first().map_or(0, Vec::len);

    let mut rdr = csv_reader(labels_path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(labels_path, 1, e.to_string()))?
        .clone();
    let header_vec: Vec<&str> = headers.iter().collect();
    let has_subject = match header_vec.as_slice() {
        ["trial_id", "start_timestep", "end_timestep", "label"] => false,
        ["trial_id", "start_timestep", "end_timestep", "label", "subject"] => true,
        other => {
            return Err(Error::parse(
                labels_path,
                1,
                format!(
                    "expected header 'trial_id,start_timestep,end_timestep,label[,subject]', found '{}'",
                    other.join(",")
                ),
            ))
        }
    };

    let mut trials = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::parse(labels_path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(Error::parse(
                labels_path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        let start = parse_usize(labels_path, line, "start_timestep", &record[1])?;
        let end = parse_usize(labels_path, line, "end_timestep", &record[2])?;
        let label = parse_usize(labels_path, line, "label", &record[3])?;
        let subject = if has_subject {
            record[4].to_string()
        } else {
            String::new()
        };

        if start >= end {
            return Err(Error::parse(
                labels_path,
                line,
                format!("trial '{id}': start_timestep {start} must be < end_timestep {end}"),
            ));
        }
        if end > total_t {
            return Err(Error::parse(
                labels_path,
                line,
                format!("trial '{id}': end_timestep {end} exceeds signal length {total_t}"),
            ));
        }

        let signal = signals.iter().map(|ch| ch[start..end].to_vec()).collect();
        let trial = Trial {
            id,
            signal,
            sample_rate,
            label,
            subject,
        };
        trial.validate()?;
        trials.push(trial);
    }

    Ok((trials, layout))
}

// ---------------------------------------------------------------------------
// Segmentation and normalization
// ---------------------------------------------------------------------------

/// Result of windowing trials into samples.
#[derive(Debug, Clone)]
pub struct Segmented {
    pub samples: Vec<Sample>,
    /// Trials shorter than the window that were skipped.
    pub skipped_short: usize,
}

/// Cuts each trial into non-overlapping `window_len` windows aligned to trial
/// start; the trailing remainder is discarded. Trials shorter than one window
/// are skipped and counted.
pub fn segment_trials(trials: &[Trial], window_len: usize) -> Result<Segmented> {
    if window_len == 0 {
        return Err(Error::Parameter("window_len must be >= 1".into()));
    }
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for trial in trials {
        let t = trial.n_timesteps();
        let n_windows = t / window_len;
        if n_windows == 0 {
            skipped += 1;
            continue;
        }
        for w in 0..n_windows {
            let lo = w * window_len;
            let hi = lo + window_len;
            samples.push(Sample {
                signal: trial.signal.iter().map(|ch| ch[lo..hi].to_vec()).collect(),
                label: trial.label,
                trial_id: trial.id.clone(),
                window_index: w,
            });
        }
    }
    Ok(Segmented {
        samples,
        skipped_short: skipped,
    })
}

/// Min-max maps each channel independently onto [-1, +1]; a constant channel
/// maps to all zeros. Idempotent, and total on valid samples.
pub fn normalize_sample(sample: &Sample) -> Sample {
    let signal = sample
        .signal
        .iter()
        .map(|ch| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in ch {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi > lo {
                let scale = 2.0 / (hi - lo);
                ch.iter().map(|&v| (v - lo) * scale - 1.0).collect()
            } else {
                vec![0.0; ch.len()]
            }
        })
        .collect();
    Sample {
        signal,
        label: sample.label,
        trial_id: sample.trial_id.clone(),
        window_index: sample.window_index,
    }
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_classes: usize,
    pub n_channels: usize,
    pub n_trials_per_class: usize,
    pub window_len: usize,
    pub seed: u64,
    /// Std-dev of additive Gaussian noise; 0 makes same-class windows identical.
    pub noise_amp: f64,
    /// Electrode blob count; `None` picks `min(5, n_channels / 3)`.
    pub n_blobs: Option<usize>,
}

impl SynthParams {
    pub fn new(
        n_classes: usize,
        n_channels: usize,
        n_trials_per_class: usize,
        window_len: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_classes,
            n_channels,
            n_trials_per_class,
            window_len,
            seed,
            noise_amp: DEFAULT_NOISE_AMP,
            n_blobs: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Parameter("n_classes must be >= 2".into()));
        }
        if self.n_channels < 3 {
            return Err(Error::Parameter("n_channels must be >= 3".into()));
        }
        if self.n_trials_per_class == 0 {
            return Err(Error::Parameter("n_trials_per_class must be >= 1".into()));
        }
        if self.window_len < 3 {
            return Err(Error::Parameter("window_len must be >= 3".into()));
        }
        if !(self.noise_amp.is_finite() && self.noise_amp >= 0.0) {
            return Err(Error::Parameter("noise_amp must be finite and >= 0".into()));
        }
        if let Some(b) = self.n_blobs {
            if b == 0 || b > self.n_channels {
                return Err(Error::Parameter(
                    "n_blobs must be in [1, n_channels]".into(),
                ));
            }
        }
        Ok(())
    }

    fn blobs(&self) -> usize {
        self.n_blobs
            .unwrap_or_else(|| (self.n_channels / 3).clamp(1, 5))
    }
}

/// Synthetic trials before windowing, with their layout and class names.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub trials: Vec<Trial>,
    pub layout: ElectrodeLayout,
    pub classes: Vec<String>,
}

const SYNTH_SAMPLE_RATE: f64 = 1000.0;
const DEFAULT_NOISE_AMP: f64 = 0.08;
const BLOB_RADIUS: f64 = 1.0;
const BLOB_SEPARATION: f64 = 15.0;
// Class/blob frequency grid (Hz) and waveform shape.
const FREQ_BASE: f64 = 3.0;
const FREQ_STEP: f64 = 2.0;
const AMP_PRIMARY: f64 = 1.0;
const AMP_SECONDARY: f64 = 0.45;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Unit-sphere directions for `n` blob centers, spread as evenly as 3-D allows.
///
/// Spherical codes for n <= 6, golden-angle lattice beyond. Near-equidistant
/// centers keep every blob merge about equally expensive, which is what gives
/// the wcss curve a sharp knee at the true blob count; a line of centers would
/// let the end blobs dominate wcss(1) and wash the knee out.
fn sphere_directions(n: usize) -> Vec<[f64; 3]> {
    let t = 3.0f64.sqrt().recip();
    match n {
        0 => Vec::new(),
        1 => vec![[0.0, 0.0, 0.0]],
        2 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        3 => (0..3)
            .map(|i| {
                let phi = i as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect(),
        4 => vec![[t, t, t], [t, -t, -t], [-t, t, -t], [-t, -t, t]],
        5 => {
            let mut v = sphere_directions(3);
            v.push([0.0, 0.0, 1.0]);
            v.push([0.0, 0.0, -1.0]);
            v
        }
        6 => vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ],
        _ => (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = GOLDEN_ANGLE * i as f64;
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect(),
    }
}

/// Places `n_channels` electrodes in `n_blobs` well-separated 3-D blobs.
///
/// Blob centers sit on a sphere, scaled so the closest pair is `separation`
/// apart (up to center jitter of half a radius); channels scatter uniformly
/// within `radius` of their center. Blob membership is contiguous in channel
/// order and recorded as the fixed cluster map, so synthetic layouts support
/// both k-means and fixed-assignment runs.
pub fn blob_layout(
    n_channels: usize,
    n_blobs: usize,
    radius: f64,
    separation: f64,
    seed: u64,
) -> Result<ElectrodeLayout> {
    if n_blobs == 0 || n_blobs > n_channels {
        return Err(Error::Parameter(
            "n_blobs must be in [1, n_channels]".into(),
        ));
    }
    if !(radius > 0.0 && separation > 0.0) {
        return Err(Error::Parameter("radius and separation must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let directions = sphere_directions(n_blobs);
    let mut min_gap = f64::INFINITY;
    for (i, a) in directions.iter().enumerate() {
        for b in &directions[i + 1..] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            min_gap = min_gap.min(d);
        }
    }
    let scale = if n_blobs > 1 {
        separation / min_gap
    } else {
        0.0
    };

    let mut centers = Vec::with_capacity(n_blobs);
    let jitter = 0.5 * radius;
    for dir in &directions {
        centers.push([
            dir[0] * scale + rng.random_range(-jitter..=jitter),
            dir[1] * scale + rng.random_range(-jitter..=jitter),
            dir[2] * scale + rng.random_range(-jitter..=jitter),
        ]);
    }

    // Contiguous block of channels per blob; first `extra` blobs get one more.
    let base_count = n_channels / n_blobs;
    let extra = n_channels % n_blobs;
    let width = (n_channels as f64).log10().floor() as usize + 1;

    let mut channels = Vec::with_capacity(n_channels);
    let mut blob_of = Vec::with_capacity(n_channels);
    let mut idx = 0usize;
    for (b, center) in centers.iter().enumerate() {
        let count = base_count + usize::from(b < extra);
        for _ in 0..count {
            let position = [
                center[0] + rng.random_range(-radius..=radius),
                center[1] + rng.random_range(-radius..=radius),
                center[2] + rng.random_range(-radius..=radius),
            ];
            channels.push(Electrode {
                id: format!("ch{idx:0width$}"),
                position,
            });
            blob_of.push(b);
            idx += 1;
        }
    }

    let layout = ElectrodeLayout {
        channels,
        fixed_clusters: Some(blob_of),
    };
    layout.validate()?;
    Ok(layout)
}

/// Primary frequency of `class` on electrodes of `blob`.
///
/// Taking the residue mod `n_classes` guarantees any two classes differ on
/// every blob, so the class signature is recoverable from any electrode group.
fn class_freq(class: usize, blob: usize, n_classes: usize) -> f64 {
    FREQ_BASE + FREQ_STEP * ((class + 3 * blob) % n_classes) as f64
}

/// Generates labeled synthetic trials (each `2 * window_len` timesteps).
///
/// Deterministic given `params.seed`: the waveform is a pure function of
/// (class, blob, channel) and only the additive noise consumes per-trial
/// randomness, drawn from a sub-seed of `(seed, class, trial)` so results do
/// not depend on generation order.
pub fn generate_synthetic_trials(params: &SynthParams) -> Result<SyntheticData> {
    params.validate()?;
    let n_blobs = params.blobs();
    let layout = blob_layout(
        params.n_channels,
        n_blobs,
        BLOB_RADIUS,
        BLOB_SEPARATION,
        derive_seed(params.seed, u64::MAX),
    )?;
    let blob_of = layout
        .fixed_clusters
        .clone()
        .expect("blob_layout always records blob membership");

    let trial_len = 2 * params.window_len;
    let dt = 1.0 / SYNTH_SAMPLE_RATE;
    let two_pi = std::f64::consts::TAU;

    let mut trials = Vec::with_capacity(params.n_classes * params.n_trials_per_class);
    for class in 0..params.n_classes {
        for trial_idx in 0..params.n_trials_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(
                params.seed,
                class as u64,
                trial_idx as u64,
            ));
            let noise = Normal::new(0.0, params.noise_amp.max(f64::MIN_POSITIVE))
                .expect("validated std-dev");

            let mut signal = Vec::with_capacity(params.n_channels);
            for (ch, &blob) in blob_of.iter().enumerate() {
                let f1 = class_freq(class, blob, params.n_classes);
                let f2 = 2.3 * f1 + 3.0;
                // Channels of one blob stay nearly in phase (0.15 rad per
                // channel): coherent patches give the conv stage a stable
                // input/output spike correlation, so features survive noise.
                let phi1 = GOLDEN_ANGLE * (blob + 1) as f64 + 0.9 * class as f64 + 0.15 * ch as f64;
                let phi2 = 1.7 * phi1 + 0.5;

                let mut series = Vec::with_capacity(trial_len);
                for step in 0..trial_len {
                    let t = step as f64 * dt;
                    let mut v = AMP_PRIMARY * (two_pi * f1 * t + phi1).sin()
                        + AMP_SECONDARY * (two_pi * f2 * t + phi2).sin();
                    if params.noise_amp > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    series.push(v);
                }
                signal.push(series);
            }

            trials.push(Trial {
                id: format!("synth-c{class}-t{trial_idx}"),
                signal,
                sample_rate: SYNTH_SAMPLE_RATE,
                label: class,
                subject: "synthetic".into(),
            });
        }
    }

    let classes = (0..params.n_classes).map(|c| format!("class{c}")).collect();
    Ok(SyntheticData {
        trials,
        layout,
        classes,
    })
}

/// Generates a windowed synthetic dataset: trials cut into two samples each.
pub fn generate_synthetic(params: &SynthParams) -> Result<LabeledDataset> {
    let data = generate_synthetic_trials(params)?;
    let segmented = segment_trials(&data.trials, params.window_len)?;
    debug_assert_eq!(segmented.skipped_short, 0);
    let dataset = LabeledDataset {
        samples: segmented.samples,
        classes: data.classes,
        layout: data.layout,
    };
    dataset.validate()?;
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Export (import-format CSVs)
// ---------------------------------------------------------------------------

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Writes trials in the import formats: `signals.csv`, `labels.csv`,
/// `layout.csv` under `dir`. Trials are concatenated along the time axis and
/// the labels file records each trial's `[start, end)` range.
///
/// Loading the exported files with [`load_trials`] round-trips the data
/// (f64 values are printed in shortest round-trip form).
pub fn export_trials(data: &SyntheticData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let layout_path = dir.join("layout.csv");
    let mut w = create_file(&layout_path)?;
    let io_err = |e| Error::io(&layout_path, e);
    if data.layout.fixed_clusters.is_some() {
        writeln!(w, "channel_id,x,y,z,cluster").map_err(io_err)?;
    } else {
        writeln!(w, "channel_id,x,y,z").map_err(io_err)?;
    }
    for (i, e) in data.layout.channels.iter().enumerate() {
        let [x, y, z] = e.position;
        match &data.layout.fixed_clusters {
            Some(map) => writeln!(w, "{},{x},{y},{z},{}", e.id, map[i]).map_err(io_err)?,
            None => writeln!(w, "{},{x},{y},{z}", e.id).map_err(io_err)?,
        }
    }
    w.flush().map_err(io_err)?;

    let signals_path = dir.join("signals.csv");
    let labels_path = dir.join("labels.csv");
    let mut sw = create_file(&signals_path)?;
    let mut lw = create_file(&labels_path)?;
    let sig_err = |e| Error::io(&signals_path, e);
    let lab_err = |e| Error::io(&labels_path, e);

    let header: Vec<&str> = data.layout.channels.iter().map(|e| e.id.as_str()).collect();
    writeln!(sw, "{}", header.join(",")).map_err(sig_err)?;
    writeln!(lw, "trial_id,start_timestep,end_timestep,label,subject").map_err(lab_err)?;

    let mut offset = 0usize;
    let mut row = String::new();
    for trial in &data.trials {
        let len = trial.n_timesteps();
        for t in 0..len {
            row.clear();
            for (c, ch) in trial.signal.iter().enumerate() {
                if c > 0 {
                    row.push(',');
                }
                row.push_str(&ch[t].to_string());
            }
            writeln!(sw, "{row}").map_err(sig_err)?;
        }
        writeln!(
            lw,
            "{},{},{},{},{}",
            trial.id,
            offset,
            offset + len,
            trial.label,
            trial.subject
        )
        .map_err(lab_err)?;
        offset += len;
    }
    sw.flush().map_err(sig_err)?;
    lw.flush().map_err(lab_err)?;
    Ok(())
}
