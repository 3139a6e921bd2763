//! Post-hoc labeling: turn an unlabeled recording into an epoch-labeled
//! decoding dataset.
//!
//! A target source is picked from the projected source space, its band-power
//! envelope becomes the continuous label, and epoching plus artifact masking
//! yield the final dataset. Labels are noiseless by construction; controlled
//! noise can be injected afterwards with [`add_label_noise`].

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{design_butterworth_bandpass, filtfilt};
use crate::hilbert::hilbert_envelope;
use crate::source::{relative_source_power, SourceProjection};
use crate::timeseries::{epoch, EpochSet, TimeSeriesMatrix};

/// How the target source was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Anatomical,
    DataDriven,
}

impl std::fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProjectionKind::Anatomical => write!(f, "anatomical"),
            ProjectionKind::DataDriven => write!(f, "data-driven"),
        }
    }
}

/// Identity of the labeled source within its projection.
#[derive(Debug, Clone, Copy)]
pub struct SourceDescriptor {
    pub projection: ProjectionKind,
    pub source_index: usize,
    pub relative_power: f64,
}

/// Target-source selection rule.
#[derive(Debug, Clone, Copy)]
pub enum SourceCriterion {
    /// Use this source index directly.
    Index(usize),
    /// Source whose relative power is nearest the quantile (ties resolve to
    /// the lower index).
    PowerQuantile(f64),
    /// Uniformly random source, deterministic for the seed.
    Random { seed: u64 },
}

/// Picks a target source from projected source-space data.
pub fn select_target_source(
    sources: &TimeSeriesMatrix,
    criterion: SourceCriterion,
) -> Result<usize> {
    let n_s = sources.n_channels();
    match criterion {
        SourceCriterion::Index(index) => {
            if index >= n_s {
                return Err(Error::InvalidIndex {
                    index,
                    sources: n_s,
                });
            }
            Ok(index)
        }
        SourceCriterion::PowerQuantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidRequest {
                    context: format!("quantile {q} outside [0, 1]"),
                });
            }
            let power = relative_source_power(sources)?;
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (i, &p) in power.iter().enumerate() {
                let dist = (p - q).abs();
                if dist < best_dist {
                    best = i;
                    best_dist = dist;
                }
            }
            Ok(best)
        }
        SourceCriterion::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(rng.gen_range(0..n_s))
        }
    }
}

/// Bandpasses a recording, projects it and takes the envelope of one source.
///
/// Returns the continuous label `z` (same length as the recording) together
/// with the band-limited source time course it was derived from.
pub fn extract_labels(
    x: &TimeSeriesMatrix,
    projection: &dyn SourceProjection,
    band: (f64, f64),
    source_index: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if source_index >= projection.n_sources() {
        return Err(Error::InvalidIndex {
            index: source_index,
            sources: projection.n_sources(),
        });
    }
    let spec = design_butterworth_bandpass(band.0, band.1, 5, x.sample_rate_hz())?;
    let banded = filtfilt(&spec, x)?;
    let sources = projection.project(&banded)?;
    let s_z: Vec<f64> = sources.data().row(source_index).to_vec();
    let z = hilbert_envelope(&s_z)?;
    Ok((z, s_z))
}

/// Per-epoch label definition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LabelMode {
    /// Epoch mean of the squared envelope (band power).
    #[default]
    MeanSquaredEnvelope,
    /// Epoch mean of the envelope itself, for sensitivity checks.
    MeanEnvelope,
}

/// Metadata attached to a dataset at assembly time.
#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub band: (f64, f64),
    pub source: SourceDescriptor,
    pub ground_truth_pattern: Option<Array1<f64>>,
    pub label_mode: LabelMode,
}

impl DatasetMeta {
    /// Minimal metadata for datasets assembled outside the labeling
    /// pipeline.
    pub fn bare(band: (f64, f64)) -> Self {
        Self {
            band,
            source: SourceDescriptor {
                projection: ProjectionKind::Anatomical,
                source_index: 0,
                relative_power: f64::NAN,
            },
            ground_truth_pattern: None,
            label_mode: LabelMode::default(),
        }
    }
}

/// Epoched recording with per-epoch labels and a good-epoch mask.
///
/// Artifactual epochs stay in storage but are flagged out of `good_mask`, so
/// dataset-size subsampling over the good-epoch sequence is reproducible.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    epochs: EpochSet,
    labels: Vec<f64>,
    good_mask: Vec<bool>,
    meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(
        epochs: EpochSet,
        labels: Vec<f64>,
        good_mask: Option<Vec<bool>>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if labels.len() != epochs.n_epochs() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{} labels for {} epochs",
                    labels.len(),
                    epochs.n_epochs()
                ),
            });
        }
        let good_mask = match good_mask {
            Some(mask) => {
                if mask.len() != epochs.n_epochs() {
                    return Err(Error::ShapeMismatch {
                        context: format!(
                            "{} mask entries for {} epochs",
                            mask.len(),
                            epochs.n_epochs()
                        ),
                    });
                }
                mask
            }
            None => vec![true; epochs.n_epochs()],
        };
        for (i, (&label, &good)) in labels.iter().zip(&good_mask).enumerate() {
            if good && !label.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("label of good epoch {i}"),
                });
            }
        }
        Ok(Self {
            epochs,
            labels,
            good_mask,
            meta,
        })
    }

    pub fn epochs(&self) -> &EpochSet {
        &self.epochs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn good_mask(&self) -> &[bool] {
        &self.good_mask
    }

    pub fn band(&self) -> (f64, f64) {
        self.meta.band
    }

    pub fn source(&self) -> &SourceDescriptor {
        &self.meta.source
    }

    pub fn ground_truth_pattern(&self) -> Option<&Array1<f64>> {
        self.meta.ground_truth_pattern.as_ref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.n_epochs()
    }

    /// Indices of the good epochs, chronological.
    pub fn good_indices(&self) -> Vec<usize> {
        self.good_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| g.then_some(i))
            .collect()
    }

    /// Dataset restricted to the chronologically first `n` good epochs.
    pub fn first_good(&self, n: usize) -> Result<LabeledDataset> {
        let good = self.good_indices();
        if good.len() < n {
            return Err(Error::InsufficientData {
                got: good.len(),
                needed: n,
            });
        }
        let keep = &good[..n];
        let epochs = self.epochs.subset(keep);
        let labels = keep.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(epochs, labels, None, self.meta.clone())
    }

    /// Same dataset with replaced labels (for noise injection).
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.epochs.clone(),
            labels,
            Some(self.good_mask.clone()),
            self.meta.clone(),
        )
    }
}

/// Epochs a bandpassed recording and its continuous label together.
///
/// The per-epoch label is the mean of `z^2` over the window (or of `z`,
/// depending on `meta.label_mode`). `artifact_mask`, when given, must align
/// with the epoch grid.
pub fn build_dataset(
    x: &TimeSeriesMatrix,
    z: &[f64],
    window_s: f64,
    artifact_mask: Option<&[bool]>,
    meta: DatasetMeta,
) -> Result<LabeledDataset> {
    if z.len() != x.n_samples() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "{} label samples for {} recording samples",
                z.len(),
                x.n_samples()
            ),
        });
    }
    let epochs = epoch(x, window_s)?;
    let len = epochs.samples_per_epoch();
    let labels: Vec<f64> = epochs
        .epoch_starts()
        .iter()
        .map(|&start| {
            let window = &z[start..start + len];
            match meta.label_mode {
                LabelMode::MeanSquaredEnvelope => {
                    window.iter().map(|v| v * v).sum::<f64>() / len as f64
                }
                LabelMode::MeanEnvelope => window.iter().sum::<f64>() / len as f64,
            }
        })
        .collect();
    let good_mask = artifact_mask
        .map(|m| {
            if m.len() != epochs.n_epochs() {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "{} artifact flags for {} epochs",
                        m.len(),
                        epochs.n_epochs()
                    ),
                });
            }
            Ok(m.iter().map(|&artifact| !artifact).collect::<Vec<bool>>())
        })
        .transpose()?;
    LabeledDataset::new(epochs, labels, good_mask, meta)
}

/// Controlled label degradation.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Noise level in `[0, 1)`; the expected correlation between clean and
    /// noisy labels is `1 - xi`.
    pub xi: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(xi: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::InvalidNoise { xi });
        }
        Ok(Self { xi, seed })
    }
}

/// Adds Gaussian noise to the labels so that `corr(z, z_n) = 1 - xi` in
/// expectation.
///
/// The noise amplitude is `sqrt((1 - rho^2) / rho^2) * std(z)` with
/// `rho = 1 - xi`; `xi = 0` returns the labels unchanged.
pub fn add_label_noise(z: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&spec.xi) {
        return Err(Error::InvalidNoise { xi: spec.xi });
    }
    if z.len() < 2 {
        return Err(Error::InsufficientData {
            got: z.len(),
            needed: 2,
        });
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::DegenerateLabels);
    }
    if spec.xi == 0.0 {
        return Ok(z.to_vec());
    }
    let rho = 1.0 - spec.xi;
    let amplitude = ((1.0 - rho * rho) / (rho * rho)).sqrt() * var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(z.iter()
        .map(|v| v + amplitude * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// The printed coefficient variant of the noise model, kept for comparison:
/// `z_n = z + ((1 - (1 - xi)^2) / (1 - xi)^2) var(z) eta`.
///
/// Its correlation does not follow the `1 - xi` contract; prefer
/// [`add_label_noise`].
pub fn add_label_noise_literal(z: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&spec.xi) {
        return Err(Error::InvalidNoise { xi: spec.xi });
    }
    if z.len() < 2 {
        return Err(Error::InsufficientData {
            got: z.len(),
            needed: 2,
        });
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::DegenerateLabels);
    }
    if spec.xi == 0.0 {
        return Ok(z.to_vec());
    }
    let rho = 1.0 - spec.xi;
    let amplitude = (1.0 - rho * rho) / (rho * rho) * var;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(z.iter()
        .map(|v| v + amplitude * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
