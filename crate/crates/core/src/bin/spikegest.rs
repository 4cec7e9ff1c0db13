//! Command-line front end for the gesture-decoding pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikegest::pipeline::{
    self, assignment_csv, features_csv, parse_config, render_confusion, sweep_csv, wcss_curve_csv,
    PipelineConfig, RunReport,
};
use spikegest::signal_io::{export_trials, normalize_sample};
use spikegest::spike_encoding::encode_sample;
use spikegest::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spikegest",
    version,
    about = "Spiking-network gesture decoding: encode, cluster, extract, classify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a key=value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override seed_data.
    #[arg(long)]
    seed_data: Option<u64>,
    /// Override seed_clustering.
    #[arg(long)]
    seed_clustering: Option<u64>,
    /// Override seed_kernels.
    #[arg(long)]
    seed_kernels: Option<u64>,
    /// Override seed_split.
    #[arg(long)]
    seed_split: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = parse_config(&self.config)?;
        if let Some(dir) = &self.out {
            config.output_dir = Some(dir.clone());
        }
        if let Some(s) = self.seed_data {
            config.seed_data = s;
        }
        if let Some(s) = self.seed_clustering {
            config.seed_clustering = s;
        }
        if let Some(s) = self.seed_kernels {
            config.seed_kernels = s;
        }
        if let Some(s) = self.seed_split {
            config.seed_split = s;
        }
        Ok(config)
    }

    fn out_dir(&self, config: &PipelineConfig) -> Result<PathBuf> {
        let dir = config.output_dir.clone().ok_or_else(|| {
            Error::Config("output directory required (--out or output_dir in config)".into())
        })?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic trials and write them in the import CSV formats.
    Synth(ConfigArgs),
    /// Dump one sample's spike raster (rows = channels) for debugging.
    Encode {
        #[command(flatten)]
        args: ConfigArgs,
        /// Sample index to encode.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Cluster electrodes and write the assignment (and wcss curve).
    Cluster(ConfigArgs),
    /// Extract the feature matrix.
    Features(ConfigArgs),
    /// Split, train, and evaluate; write report.json and confusion.csv.
    TrainEval(ConfigArgs),
    /// Evaluate a range of cluster counts with all seeds held fixed.
    SweepClusters {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        k_min: usize,
        #[arg(long)]
        k_max: usize,
    },
    /// Render the confusion matrix of a saved report.
    Confusion {
        /// Path to a report.json written by train-eval or run.
        #[arg(long)]
        report: PathBuf,
        /// Directory to write confusion.csv into (optional).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline run with artifacts and manifest.
    Run(ConfigArgs),
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn cmd_synth(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let params = config.synth_params()?;
    let data = spikegest::signal_io::generate_synthetic_trials(&params)?;
    export_trials(&data, &dir)?;
    println!(
        "wrote {} trials ({} classes, {} channels) to {}",
        data.trials.len(),
        data.classes.len(),
        data.layout.n_channels(),
        dir.display()
    );
    Ok(())
}

fn cmd_encode(args: &ConfigArgs, sample_idx: usize) -> Result<()> {
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let staged = pipeline::load_stage(&config)?;
    let Some(sample) = staged.dataset.samples.get(sample_idx) else {
        return Err(Error::Parameter(format!(
            "sample index {sample_idx} out of range; dataset has {}",
            staged.dataset.samples.len()
        )));
    };
    let raster = encode_sample(&normalize_sample(sample), config.theta_th)?;
    let mut csv = String::new();
    for channel in &raster.channels {
        let row: Vec<String> = channel.iter().map(|v| v.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let path = write_out(&dir, &format!("raster_{sample_idx}.csv"), &csv)?;
    let spikes: usize = raster
        .channels
        .iter()
        .flatten()
        .filter(|&&v| v != 0)
        .count();
    println!(
        "sample '{}': {} channels x {} timesteps, {} spikes -> {}",
        sample.id(),
        raster.n_channels(),
        raster.n_timesteps(),
        spikes,
        path.display()
    );
    Ok(())
}

fn cmd_cluster(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let staged = pipeline::load_stage(&config)?;
    let (clusters, elbow) = pipeline::cluster_stage(&config, &staged.dataset)?;
    let ids: Vec<String> = staged
        .dataset
        .layout
        .channels
        .iter()
        .map(|e| e.id.clone())
        .collect();
    let path = write_out(&dir, "assignment.csv", &assignment_csv(&ids, &clusters))?;
    println!(
        "{} clusters over {} channels, wcss {:.6} -> {}",
        clusters.n_c,
        ids.len(),
        clusters.wcss,
        path.display()
    );
    if let Some(elbow) = &elbow {
        let path = write_out(&dir, "wcss_curve.csv", &wcss_curve_csv(elbow))?;
        println!(
            "elbow selected k = {} -> {}",
            elbow.selected_k,
            path.display()
        );
    }
    let undersized: Vec<usize> = clusters
        .cluster_sizes()
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s < 3)
        .map(|(c, _)| c)
        .collect();
    if !undersized.is_empty() {
        println!(
            "warning: clusters {undersized:?} have fewer than 3 channels; feature extraction will reject this topology"
        );
    }
    Ok(())
}

fn cmd_features(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let staged = pipeline::load_stage(&config)?;
    let (clusters, _) = pipeline::cluster_stage(&config, &staged.dataset)?;
    let features = spikegest::conv_snn::extract_dataset_features(
        &staged.dataset,
        &clusters,
        config.theta_th,
        config.seed_kernels,
        &config.plasticity_params(),
        config.theta_conv,
        config.parallel,
    )?;
    let path = write_out(&dir, "features.csv", &features_csv(&features))?;
    let width = features.first().map_or(0, |f| f.values.len());
    println!(
        "{} samples x {} features -> {}",
        features.len(),
        width,
        path.display()
    );
    Ok(())
}

fn cmd_train_eval(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let run = pipeline::run_in_memory(&config)?;
    let report_json = serde_json::to_string_pretty(&run.report)
        .map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
    let report_path = write_out(&dir, "report.json", &report_json)?;
    let (csv, _) = render_confusion(&run.report.combined_confusion, &run.report.classes)?;
    let confusion_path = write_out(&dir, "confusion.csv", &csv)?;
    print_summary(&run.report);
    println!(
        "wrote {} and {}",
        report_path.display(),
        confusion_path.display()
    );
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, k_min: usize, k_max: usize) -> Result<()> {
    if k_min == 0 || k_max < k_min {
        return Err(Error::Parameter(format!(
            "need 1 <= k_min <= k_max, got {k_min}..{k_max}"
        )));
    }
    let config = args.load()?;
    let dir = args.out_dir(&config)?;
    let range: Vec<usize> = (k_min..=k_max).collect();
    let rows = pipeline::sweep_clusters(&config, &range)?;
    let path = write_out(&dir, "sweep.csv", &sweep_csv(&rows))?;
    for row in &rows {
        match (row.feasible, row.mean_accuracy, row.std_accuracy) {
            (true, Some(mean), Some(std)) => {
                println!("k = {:>2}: accuracy {:.4} +/- {:.4}", row.k, mean, std);
            }
            _ => println!("k = {:>2}: infeasible ({})", row.k, row.note),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_confusion(report_path: &PathBuf, out: Option<&PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report: RunReport = serde_json::from_str(&text)
        .map_err(|e| Error::parse(report_path, 0, format!("not a valid run report: {e}")))?;
    let (csv, rendered) = render_confusion(&report.combined_confusion, &report.classes)?;
    println!("{rendered}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = write_out(dir, "confusion.csv", &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let (run, manifest) = pipeline::run_pipeline(&config)?;
    print_summary(&run.report);
    let dir = config.output_dir.expect("run_pipeline requires output_dir");
    for (name, _) in &manifest.outputs {
        println!("wrote {}", dir.join(name).display());
    }
    println!("wrote {}", dir.join("manifest.txt").display());
    Ok(())
}

fn print_summary(report: &RunReport) {
    println!(
        "{} samples, {} channels, {} clusters, feature length {}",
        report.n_samples, report.n_channels, report.n_c, report.feature_len
    );
    if let Some(k) = report.selected_k {
        println!("elbow selected k = {k}");
    }
    if report.skipped_short_trials > 0 {
        println!(
            "skipped {} trials shorter than the window",
            report.skipped_short_trials
        );
    }
    for w in &report.split_warnings {
        println!("warning: {w}");
    }
    println!(
        "accuracy {:.4} +/- {:.4} over {} splits",
        report.mean_accuracy,
        report.std_accuracy,
        report.repetitions.len()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Encode { args, sample } => cmd_encode(args, *sample),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Features(args) => cmd_features(args),
        Command::TrainEval(args) => cmd_train_eval(args),
        Command::SweepClusters { args, k_min, k_max } => cmd_sweep(args, *k_min, *k_max),
        Command::Confusion { report, out } => cmd_confusion(report, out.as_ref()),
        Command::Run(args) => cmd_run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
