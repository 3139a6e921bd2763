//! The three-hyperparameter sweep: dataset size, label noise and relative
//! target-source power.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::{design_butterworth_bandpass, filtfilt};
use crate::harness::{run_cv_with, SweepConfig, SweepResult};
use crate::hilbert::hilbert_envelope;
use crate::labeling::{
    add_label_noise, build_dataset, DatasetMeta, NoiseSpec, ProjectionKind, SourceDescriptor,
};
use crate::source::{
    fast_ica, mne_inverse_operator, relative_source_power, LeadField, SourceProjection,
};
use crate::timeseries::{mark_artifacts, TimeSeriesMatrix};

/// Knobs of the shared dataset-preparation stage.
#[derive(Debug, Clone, Copy)]
pub struct PreparationOptions {
    /// Target frequency band in Hz.
    pub band: (f64, f64),
    pub window_s: f64,
    /// Peak-to-peak artifact threshold in volts.
    pub p2p_threshold: f64,
    /// Band used for artifact detection, in Hz.
    pub detection_band: (f64, f64),
    /// Number of components for the data-driven route; defaults to
    /// `min(20, n_channels)`.
    pub ica_components: Option<usize>,
    pub ica_seed: u64,
    /// Iteration cap for the data-driven route. Directions of Gaussian
    /// background activity are not identifiable and never settle, so the
    /// cap, not the tolerance, usually ends the fit.
    pub ica_max_iter: usize,
    /// Regularization of the anatomical inverse.
    pub mne_lambda: f64,
}

impl Default for PreparationOptions {
    fn default() -> Self {
        Self {
            band: (8.0, 12.0),
            window_s: 1.0,
            p2p_threshold: 80e-6,
            detection_band: (0.7, 25.0),
            ica_components: None,
            ica_seed: 0,
            ica_max_iter: 200,
            mne_lambda: 1.0,
        }
    }
}

/// Recording-level state shared by every configuration of a sweep: the
/// bandpassed data, its source-space projection, the artifact mask and the
/// per-source relative powers.
#[derive(Debug, Clone)]
pub struct PreparedRecording {
    banded: TimeSeriesMatrix,
    sources_band: TimeSeriesMatrix,
    artifact_mask: Vec<bool>,
    rel_power: Vec<f64>,
    /// Ground-truth pattern per source: lead-field columns (anatomical) or
    /// mixing columns (data-driven).
    patterns: Array2<f64>,
    projection: ProjectionKind,
    band: (f64, f64),
    window_s: f64,
}

impl PreparedRecording {
    pub fn n_sources(&self) -> usize {
        self.sources_band.n_channels()
    }

    pub fn rel_power(&self) -> &[f64] {
        &self.rel_power
    }

    pub fn artifact_mask(&self) -> &[bool] {
        &self.artifact_mask
    }

    pub fn good_epoch_count(&self) -> usize {
        self.artifact_mask.iter().filter(|&&a| !a).count()
    }

    /// Uniformly random source index, deterministic for the seed.
    pub fn random_source(&self, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.gen_range(0..self.n_sources())
    }

    /// Source index whose relative power is nearest `quantile`, ties to the
    /// lower index.
    pub fn source_at_quantile(&self, quantile: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&quantile) {
            return Err(Error::InvalidRequest {
                context: format!("quantile {quantile} outside [0, 1]"),
            });
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &p) in self.rel_power.iter().enumerate() {
            let dist = (p - quantile).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        Ok(best)
    }

    /// Labeled dataset for the source selected at `quantile`, covering all
    /// epochs of the recording.
    pub fn dataset_at_quantile(&self, quantile: f64) -> Result<crate::labeling::LabeledDataset> {
        self.dataset_for_source(self.source_at_quantile(quantile)?)
    }

    /// Labeled dataset for an explicit source index.
    pub fn dataset_for_source(&self, index: usize) -> Result<crate::labeling::LabeledDataset> {
        if index >= self.n_sources() {
            return Err(Error::InvalidIndex {
                index,
                sources: self.n_sources(),
            });
        }
        let s_z: Vec<f64> = self.sources_band.data().row(index).to_vec();
        let z = hilbert_envelope(&s_z)?;
        let meta = DatasetMeta {
            band: self.band,
            source: SourceDescriptor {
                projection: self.projection,
                source_index: index,
                relative_power: self.rel_power[index],
            },
            ground_truth_pattern: Some(self.patterns.column(index).to_owned()),
            label_mode: Default::default(),
        };
        build_dataset(
            &self.banded,
            &z,
            self.window_s,
            Some(&self.artifact_mask),
            meta,
        )
    }
}

/// Runs the shared preparation stage once per recording.
///
/// Artifacts are marked on the detection band; the recording is bandpassed
/// to the target band and projected with the requested route. The anatomical
/// route needs a lead field; the data-driven route fits its unmixing on the
/// bandpassed data.
pub fn prepare_recording(
    x: &TimeSeriesMatrix,
    lead_field: Option<&LeadField>,
    projection: ProjectionKind,
    opts: &PreparationOptions,
) -> Result<PreparedRecording> {
    let detect_spec = design_butterworth_bandpass(
        opts.detection_band.0,
        opts.detection_band.1,
        5,
        x.sample_rate_hz(),
    )?;
    let detected = filtfilt(&detect_spec, x)?;
    let artifact_mask = mark_artifacts(&detected, opts.window_s, opts.p2p_threshold)?;

    let band_spec =
        design_butterworth_bandpass(opts.band.0, opts.band.1, 5, x.sample_rate_hz())?;
    let banded = filtfilt(&band_spec, x)?;

    let (sources_band, patterns) = match projection {
        ProjectionKind::Anatomical => {
            let lf = lead_field.ok_or_else(|| Error::InvalidRequest {
                context: "anatomical projection needs a lead field".into(),
            })?;
            let op = mne_inverse_operator(lf, opts.mne_lambda)?;
            (op.project(&banded)?, lf.matrix().clone())
        }
        ProjectionKind::DataDriven => {
            let n_components = opts.ica_components.unwrap_or(20).min(x.n_channels());
            let model = fast_ica(&banded, n_components, opts.ica_seed, 1e-6, opts.ica_max_iter)?;
            (model.project(&banded)?, model.mixing().clone())
        }
    };
    let rel_power = relative_source_power(&sources_band)?;

    Ok(PreparedRecording {
        banded,
        sources_band,
        artifact_mask,
        rel_power,
        patterns,
        projection,
        band: opts.band,
        window_s: opts.window_s,
    })
}

/// One point of the sampled configuration grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigPoint {
    pub config_id: usize,
    pub n_epochs: usize,
    pub xi: f64,
    pub quantile: f64,
    /// Per-configuration seed, derived from the sweep seed.
    pub seed: u64,
}

fn derive_seed(master: u64, config_id: usize) -> u64 {
    // splitmix-style mixing keeps per-config streams independent
    let mut z = master ^ (config_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples the configuration grid deterministically.
///
/// Up to the grid-product size the grid is sampled without replacement
/// (seeded shuffle); any remaining budget draws with replacement.
pub fn sample_configurations(config: &SweepConfig) -> Result<Vec<ConfigPoint>> {
    config.validate()?;
    let grid: Vec<(usize, f64, f64)> = config
        .n_epochs_grid
        .iter()
        .flat_map(|&n| {
            config.xi_grid.iter().flat_map(move |&xi| {
                config
                    .source_power_quantiles
                    .iter()
                    .map(move |&q| (n, xi, q))
            })
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..grid.len()).collect();
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let mut points = Vec::with_capacity(config.evaluation_budget);
    for config_id in 0..config.evaluation_budget {
        let grid_idx = if config_id < order.len() {
            order[config_id]
        } else {
            rng.gen_range(0..grid.len())
        };
        let (n_epochs, xi, quantile) = grid[grid_idx];
        points.push(ConfigPoint {
            config_id,
            n_epochs,
            xi,
            quantile,
            seed: derive_seed(config.seed, config_id),
        });
    }
    Ok(points)
}

/// Evaluates one configuration: select the target source, truncate to the
/// first `n_epochs` good epochs, inject label noise and cross-validate.
pub fn evaluate_config(
    prepared: &PreparedRecording,
    point: &ConfigPoint,
    k_folds: usize,
    shrinkage: f64,
) -> Result<SweepResult> {
    let dataset = prepared.dataset_at_quantile(point.quantile)?;
    let truncated = dataset.first_good(point.n_epochs)?;
    let train_labels = add_label_noise(
        truncated.labels(),
        &NoiseSpec {
            xi: point.xi,
            seed: point.seed,
        },
    )?;
    let cv = run_cv_with(&truncated, Some(&train_labels), k_folds, shrinkage)?;
    Ok(SweepResult {
        config_id: point.config_id,
        n_epochs: point.n_epochs,
        xi: point.xi,
        rel_power: point.quantile,
        seed: point.seed,
        mean_rho: cv.mean_rho,
        mean_alpha_rad: cv.mean_alpha_rad.unwrap_or(f64::NAN),
        folds: cv.folds,
    })
}

/// Evaluates every sampled configuration in configuration order.
///
/// `on_result` is invoked after each configuration completes, so callers can
/// stream rows to disk as the sweep progresses.
pub fn run_sweep(
    config: &SweepConfig,
    prepared: &PreparedRecording,
    shrinkage: f64,
    mut on_result: impl FnMut(&SweepResult) -> Result<()>,
) -> Result<Vec<SweepResult>> {
    let points = sample_configurations(config)?;
    let mut results = Vec::with_capacity(points.len());
    for point in &points {
        let result = evaluate_config(prepared, point, config.k_folds, shrinkage)?;
        on_result(&result)?;
        results.push(result);
    }
    Ok(results)
}
