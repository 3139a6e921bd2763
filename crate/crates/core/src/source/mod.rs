//! Channel-space to source-space projections and synthetic ground truth.
//!
//! Two projection routes are provided: an anatomically constrained one via a
//! lead field and its regularized linear inverse ([`mne_inverse_operator`]),
//! and a data-driven one via [`fast_ica`]. Synthetic lead fields and
//! recordings with a planted narrow-band target source support benchmarking
//! against known ground truth.

mod ica;
mod mne;
mod synth;

pub use ica::{fast_ica, UnmixingModel};
pub use mne::{apply_inverse, mne_inverse_operator, InverseOperator};
pub use synth::{synth_recording, SyntheticGroundTruth};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;

/// Forward matrix mapping source activity to the sensors, channels x sources.
///
/// Each column is the spatial pattern of one source.
#[derive(Debug, Clone)]
pub struct LeadField {
    a: Array2<f64>,
    channel_labels: Vec<String>,
}

impl LeadField {
    pub fn new(a: Array2<f64>, channel_labels: Option<Vec<String>>) -> Result<Self> {
        let (n_c, n_s) = a.dim();
        if n_c == 0 || n_s == 0 {
            return Err(Error::InvalidSize {
                context: format!("lead field must be non-empty, got {n_c}x{n_s}"),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "lead field".into(),
            });
        }
        for (j, col) in a.columns().into_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidPattern {
                    context: format!("lead-field column {j} is all zero"),
                });
            }
        }
        let channel_labels = match channel_labels {
            Some(labels) => {
                if labels.len() != n_c {
                    return Err(Error::ShapeMismatch {
                        context: format!("{} labels for {n_c} channels", labels.len()),
                    });
                }
                labels
            }
            None => (0..n_c).map(|i| format!("ch{i:02}")).collect(),
        };
        Ok(Self { a, channel_labels })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.a.ncols()
    }

    /// Spatial pattern of source `index`.
    pub fn pattern(&self, index: usize) -> Result<Array1<f64>> {
        if index >= self.n_sources() {
            return Err(Error::InvalidIndex {
                index,
                sources: self.n_sources(),
            });
        }
        Ok(self.a.column(index).to_owned())
    }
}

/// Common surface of the two projection routes.
pub trait SourceProjection {
    /// Projects a channels x samples recording into source space.
    fn project(&self, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix>;

    fn n_sources(&self) -> usize;

    fn n_channels(&self) -> usize;
}

pub(crate) fn source_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("src{i:03}")).collect()
}

pub(crate) fn project_matrix(m: &Array2<f64>, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    if m.ncols() != x.n_channels() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "projection expects {} channels, recording has {}",
                m.ncols(),
                x.n_channels()
            ),
        });
    }
    TimeSeriesMatrix::new(
        m.dot(x.data()),
        x.sample_rate_hz(),
        Some(source_labels(m.nrows())),
    )
}

/// Rank-normalized variance of each source, in `[0, 1]`.
///
/// The weakest source maps to 0 and the strongest to 1; intermediate sources
/// sit at `rank / (n_sources - 1)`. Ties are broken by source index.
pub fn relative_source_power(sources: &TimeSeriesMatrix) -> Result<Vec<f64>> {
    let n_s = sources.n_channels();
    if n_s < 2 {
        return Err(Error::DegenerateRanking { sources: n_s });
    }
    let n_t = sources.n_samples() as f64;
    let variances: Vec<f64> = sources
        .data()
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / n_t;
            row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_t
        })
        .collect();
    let mut order: Vec<usize> = (0..n_s).collect();
    order.sort_by(|&i, &j| {
        variances[i]
            .partial_cmp(&variances[j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut power = vec![0.0; n_s];
    let denom = (n_s - 1) as f64;
    for (rank, &idx) in order.iter().enumerate() {
        power[idx] = rank as f64 / denom;
    }
    Ok(power)
}

/// Synthesizes a lead field of smooth pseudo-topographies.
///
/// Channels are laid out on a ring; each column is a random vector smoothed
/// by a Gaussian adjacency kernel and normalized to unit norm. Deterministic
/// given `seed`.
pub fn synth_lead_field(n_channels: usize, n_sources: usize, seed: u64) -> Result<LeadField> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    if n_channels < 2 || n_sources < 1 {
        return Err(Error::InvalidSize {
            context: format!("need >= 2 channels and >= 1 source, got {n_channels}x{n_sources}"),
        });
    }
    let sigma = 0.5_f64; // kernel width in radians on the channel ring
    let mut kernel = Array2::zeros((n_channels, n_channels));
    for i in 0..n_channels {
        for j in 0..n_channels {
            let d = 2.0 * std::f64::consts::PI * (i as f64 - j as f64) / n_channels as f64;
            let d = d.sin().atan2(d.cos()).abs(); // wrap to [0, pi]
            kernel[[i, j]] = (-d * d / (2.0 * sigma * sigma)).exp();
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::zeros((n_channels, n_sources));
    for j in 0..n_sources {
        loop {
            let g = Array1::from_shape_fn(n_channels, |_| rng.sample::<f64, _>(StandardNormal));
            let col = kernel.dot(&g);
            let norm = col.dot(&col).sqrt();
            if norm > 1e-12 {
                a.column_mut(j).assign(&(col / norm));
                break;
            }
        }
    }
    LeadField::new(a, None)
}
