//! `phlb` - generate labeled benchmark datasets from multichannel
//! recordings and characterize the SPoC decoder on them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use phlb_core::harness::{
    config::parse_sweep_config,
    evaluate_config, io, marginalize, prepare_recording, run_cv_with, sample_configurations,
    MarginalDimension, PreparationOptions, SweepConfig,
};
use phlb_core::labeling::{add_label_noise, NoiseSpec, ProjectionKind};
use phlb_core::source::{synth_lead_field, synth_recording};
use phlb_core::spoc::{correlation_metric, pattern_angle, spoc_predict, spoc_train};

#[derive(Parser)]
#[command(
    name = "phlb",
    about = "Post-hoc labeled benchmarking of oscillatory source decoders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Target frequency band as LOW:HIGH in Hz.
    #[arg(long, default_value = "8:12", value_parser = parse_band)]
    band: (f64, f64),
    /// Epoch window length in seconds.
    #[arg(long, default_value_t = 1.0)]
    window_s: f64,
    /// Peak-to-peak artifact threshold in microvolts.
    #[arg(long, default_value_t = 80.0)]
    p2p_uv: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic lead field, recording and ground truth.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 31)]
        channels: usize,
        #[arg(long, default_value_t = 50)]
        sources: usize,
        #[arg(long, default_value_t = 600.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 120.0)]
        rate_hz: f64,
        /// Index of the planted target source.
        #[arg(long, default_value_t = 0)]
        target_index: usize,
        /// Target-to-background power ratio in dB.
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <out>.leadfield.*, <out>.recording.*,
        /// <out>.envelope.phlb, <out>.pattern.phlb and <out>.truth.meta.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract post-hoc labels from a recording into a dataset bundle.
    Label {
        #[command(flatten)]
        common: CommonOpts,
        /// Recording prefix (expects <prefix>.phlb and <prefix>.meta).
        #[arg(long)]
        recording: PathBuf,
        /// Lead-field prefix, required for the anatomical projection.
        #[arg(long)]
        leadfield: Option<PathBuf>,
        #[arg(long, default_value = "anatomical", value_parser = parse_projection)]
        projection: ProjectionKind,
        /// Select the target source by explicit index.
        #[arg(long, conflicts_with_all = ["quantile", "random_source"])]
        source_index: Option<usize>,
        /// Select the target source at a relative-power quantile in [0, 1].
        #[arg(long, conflicts_with = "random_source")]
        quantile: Option<f64>,
        /// Select the target source uniformly at random (uses --seed).
        #[arg(long)]
        random_source: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Regularization of the anatomical inverse.
        #[arg(long, default_value_t = 1.0)]
        mne_lambda: f64,
        /// Component count for the data-driven projection.
        #[arg(long)]
        ica_components: Option<usize>,
        /// Output prefix for the dataset bundle.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single model on a dataset and report training metrics.
    Train {
        /// Dataset prefix as written by `label`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        shrinkage: f64,
        /// Model CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Chronological cross-validated evaluation of a dataset.
    Cv {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_folds: usize,
        #[arg(long, default_value_t = 1e-8)]
        shrinkage: f64,
        /// Label-noise level injected into the training labels.
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a hyperparameter sweep and stream results to CSV.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Sweep configuration file (key = value).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        leadfield: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        shrinkage: f64,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Results CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Skip configurations already present in the results file.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate a results CSV along one hyperparameter axis.
    Marginalize {
        #[arg(long)]
        results: PathBuf,
        /// One of: n_epochs, xi, rel_power.
        #[arg(long)]
        dimension: String,
        /// Output CSV path; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_band(value: &str) -> std::result::Result<(f64, f64), String> {
    let (low, high) = value
        .split_once(':')
        .ok_or_else(|| format!("expected LOW:HIGH, got {value}"))?;
    let low: f64 = low.parse().map_err(|_| format!("bad band edge {low}"))?;
    let high: f64 = high.parse().map_err(|_| format!("bad band edge {high}"))?;
    Ok((low, high))
}

fn parse_projection(value: &str) -> std::result::Result<ProjectionKind, String> {
    match value {
        "anatomical" => Ok(ProjectionKind::Anatomical),
        "data-driven" => Ok(ProjectionKind::DataDriven),
        other => Err(format!(
            "projection must be anatomical or data-driven, got {other}"
        )),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            common,
            channels,
            sources,
            duration_s,
            rate_hz,
            target_index,
            snr_db,
            seed,
            out,
        } => {
            let lf = synth_lead_field(channels, sources, seed)?;
            let (recording, truth) = synth_recording(
                &lf,
                duration_s,
                rate_hz,
                common.band,
                target_index,
                snr_db,
                seed,
            )?;
            io::write_lead_field(&with_suffix(&out, ".leadfield"), &lf)?;
            io::write_recording(&with_suffix(&out, ".recording"), &recording)?;
            io::write_row_vector(&with_suffix(&out, ".envelope.phlb"), &truth.true_envelope)?;
            io::write_column_vector(
                &with_suffix(&out, ".pattern.phlb"),
                truth.true_pattern.as_slice().expect("contiguous"),
            )?;
            io::write_sidecar(
                &with_suffix(&out, ".truth.meta"),
                &[
                    ("target_source_index", truth.target_source_index.to_string()),
                    ("snr_db", truth.snr_db.to_string()),
                    ("noise_sigma", truth.noise_sigma.to_string()),
                ],
            )?;
            println!(
                "synth: {channels} channels, {sources} sources, {} samples at {rate_hz} Hz -> {}",
                recording.n_samples(),
                out.display()
            );
        }
        Command::Label {
            common,
            recording,
            leadfield,
            projection,
            source_index,
            quantile,
            random_source,
            seed,
            mne_lambda,
            ica_components,
            out,
        } => {
            let x = io::read_recording(&recording)?;
            let lf = leadfield
                .as_deref()
                .map(io::read_lead_field)
                .transpose()?;
            let opts = PreparationOptions {
                band: common.band,
                window_s: common.window_s,
                p2p_threshold: common.p2p_uv * 1e-6,
                ica_seed: seed,
                ica_components,
                mne_lambda,
                ..PreparationOptions::default()
            };
            let prepared = prepare_recording(&x, lf.as_ref(), projection, &opts)?;
            let dataset = if let Some(index) = source_index {
                prepared.dataset_for_source(index)?
            } else if let Some(q) = quantile {
                prepared.dataset_at_quantile(q)?
            } else if random_source {
                prepared.dataset_for_source(prepared.random_source(seed))?
            } else {
                bail!("select a source with --source-index, --quantile or --random-source");
            };
            io::write_dataset(&out, &dataset)?;
            let good = dataset.good_indices().len();
            println!(
                "label: source {} ({}, relative power {:.3}), {} epochs ({} good) -> {}",
                dataset.source().source_index,
                dataset.source().projection,
                dataset.source().relative_power,
                dataset.n_epochs(),
                good,
                out.display()
            );
        }
        Command::Train {
            dataset,
            shrinkage,
            out,
        } => {
            let ds = io::read_dataset(&dataset)?;
            let model = spoc_train(&ds, shrinkage)?;
            io::write_model(&out, &model)?;
            let good = ds.good_indices();
            let epochs = ds.epochs().subset(&good);
            let predictions = spoc_predict(&model, &epochs)?;
            let labels: Vec<f64> = good.iter().map(|&i| ds.labels()[i]).collect();
            let rho = correlation_metric(&predictions, &labels)?;
            println!("train: eigenvalue {:.6}, training rho {rho:.4}", model.eigenvalue);
            if let Some(truth) = ds.ground_truth_pattern() {
                let alpha = pattern_angle(truth, &model.pattern)?;
                println!("train: pattern angle {:.2} deg", alpha.to_degrees());
            }
            println!("train: model -> {}", out.display());
        }
        Command::Cv {
            dataset,
            k_folds,
            shrinkage,
            xi,
            seed,
        } => {
            let ds = io::read_dataset(&dataset)?;
            let train_labels = if xi > 0.0 {
                Some(add_label_noise(ds.labels(), &NoiseSpec::new(xi, seed)?)?)
            } else {
                None
            };
            let cv = run_cv_with(&ds, train_labels.as_deref(), k_folds, shrinkage)?;
            for fold in &cv.folds {
                match fold.alpha_rad {
                    Some(alpha) => println!(
                        "fold {}: rho {:.4}, alpha {:.2} deg",
                        fold.fold,
                        fold.rho,
                        alpha.to_degrees()
                    ),
                    None => println!("fold {}: rho {:.4}", fold.fold, fold.rho),
                }
            }
            match cv.mean_alpha_rad {
                Some(alpha) => println!(
                    "cv: mean rho {:.4}, pooled rho {:.4}, mean alpha {:.2} deg",
                    cv.mean_rho,
                    cv.pooled_rho,
                    alpha.to_degrees()
                ),
                None => println!(
                    "cv: mean rho {:.4}, pooled rho {:.4}",
                    cv.mean_rho, cv.pooled_rho
                ),
            }
        }
        Command::Sweep {
            common,
            config,
            recording,
            leadfield,
            shrinkage,
            seed,
            out,
            resume,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut sweep_config: SweepConfig = parse_sweep_config(&text)?;
            if let Some(seed) = seed {
                sweep_config.seed = seed;
            }
            let x = io::read_recording(&recording)?;
            let lf = leadfield
                .as_deref()
                .map(io::read_lead_field)
                .transpose()?;
            let opts = PreparationOptions {
                band: common.band,
                window_s: common.window_s,
                p2p_threshold: common.p2p_uv * 1e-6,
                ica_seed: sweep_config.seed,
                ..PreparationOptions::default()
            };
            let prepared =
                prepare_recording(&x, lf.as_ref(), sweep_config.projection_kind, &opts)?;

            let points = sample_configurations(&sweep_config)?;
            let completed = if resume && out.exists() {
                completed_prefix(&out, sweep_config.k_folds)?
            } else {
                0
            };
            let mut writer = if completed > 0 {
                io::ResultsWriter::append_to(&out)?
            } else {
                io::ResultsWriter::create(&out)?
            };
            for point in &points[completed..] {
                let result =
                    evaluate_config(&prepared, point, sweep_config.k_folds, shrinkage)?;
                writer.write_result(&result)?;
            }
            println!(
                "sweep: {} configurations ({} resumed) -> {}",
                points.len(),
                completed,
                out.display()
            );
        }
        Command::Marginalize {
            results,
            dimension,
            out,
        } => {
            let dimension: MarginalDimension = dimension.parse()?;
            let rows = io::read_results(&results)?;
            let grouped = io::results_from_rows(&rows);
            let marginal = marginalize(&grouped, dimension)?;
            let mut text = String::from(
                "value,n_configs,mean_rho,std_rho,mean_alpha_rad,std_alpha_rad\n",
            );
            for row in &marginal {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.value,
                    row.n_configs,
                    row.mean_rho,
                    row.std_rho,
                    row.mean_alpha_rad,
                    row.std_alpha_rad
                ));
            }
            match out {
                Some(path) => std::fs::write(&path, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

/// Number of leading configurations with a complete set of fold rows in an
/// existing results file; the file is truncated to that prefix so a resumed
/// run reproduces an uninterrupted one byte for byte.
fn completed_prefix(path: &Path, k_folds: usize) -> Result<usize> {
    let rows = io::read_results(path)?;
    let mut fold_counts: HashMap<usize, usize> = HashMap::new();
    for row in &rows {
        *fold_counts.entry(row.config_id).or_default() += 1;
    }
    let mut completed = 0;
    while fold_counts.get(&completed).copied() == Some(k_folds) {
        completed += 1;
    }

    // rewrite the valid prefix
    let mut writer = io::ResultsWriter::create(path)?;
    for result in io::results_from_rows(&rows)
        .iter()
        .filter(|r| r.config_id < completed)
    {
        writer.write_result(result)?;
    }
    Ok(completed)
}
