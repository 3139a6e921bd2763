//! Continuous multichannel recordings, epoching and artifact marking.

use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};

/// Continuous multichannel recording, channels x samples, in volts.
#[derive(Debug, Clone)]
pub struct TimeSeriesMatrix {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_labels: Vec<String>,
}

impl TimeSeriesMatrix {
    /// Builds a recording from a channels x samples matrix.
    ///
    /// Rejects empty matrices, non-positive sample rates and non-finite
    /// values. When `channel_labels` is `None`, labels `ch00`, `ch01`, ...
    /// are generated.
    pub fn new(
        data: Array2<f64>,
        sample_rate_hz: f64,
        channel_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n_channels, n_samples) = data.dim();
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::InvalidSize {
                context: format!("recording must be non-empty, got {n_channels}x{n_samples}"),
            });
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(Error::InvalidSize {
                context: format!("sample rate must be positive, got {sample_rate_hz}"),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "recording data".into(),
            });
        }
        let channel_labels = match channel_labels {
            Some(labels) => {
                if labels.len() != n_channels {
                    return Err(Error::ShapeMismatch {
                        context: format!(
                            "{} channel labels for {} channels",
                            labels.len(),
                            n_channels
                        ),
                    });
                }
                labels
            }
            None => (0..n_channels).map(|i| format!("ch{i:02}")).collect(),
        };
        Ok(Self {
            data,
            sample_rate_hz,
            channel_labels,
        })
    }

    /// Replaces the data matrix, keeping rate and labels. Shape must match.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::ShapeMismatch {
                context: format!("expected {:?}, got {:?}", self.data.dim(), data.dim()),
            });
        }
        Self::new(data, self.sample_rate_hz, Some(self.channel_labels.clone()))
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Non-overlapping, chronologically ordered fixed-length epochs.
///
/// All epochs share the shape channels x `samples_per_epoch()`; the trailing
/// remainder of the source recording is discarded.
#[derive(Debug, Clone)]
pub struct EpochSet {
    epochs: Array3<f64>,
    window_s: f64,
    sample_rate_hz: f64,
    epoch_starts: Vec<usize>,
}

impl EpochSet {
    /// Builds an epoch set from pre-cut (epoch, channel, sample) blocks.
    ///
    /// The block length must equal `round(window_s * sample_rate_hz)`. When
    /// `epoch_starts` is `None`, contiguous back-to-back placement is
    /// assumed.
    pub fn from_blocks(
        epochs: Array3<f64>,
        window_s: f64,
        sample_rate_hz: f64,
        epoch_starts: Option<Vec<usize>>,
    ) -> Result<Self> {
        let (n_e, _, len) = epochs.dim();
        let expected = (window_s * sample_rate_hz).round() as usize;
        if len != expected || len == 0 {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "epoch length {len} does not match window {window_s} s at {sample_rate_hz} Hz"
                ),
            });
        }
        let epoch_starts = match epoch_starts {
            Some(starts) => {
                if starts.len() != n_e {
                    return Err(Error::ShapeMismatch {
                        context: format!("{} starts for {n_e} epochs", starts.len()),
                    });
                }
                starts
            }
            None => (0..n_e).map(|e| e * len).collect(),
        };
        Ok(Self {
            epochs,
            window_s,
            sample_rate_hz,
            epoch_starts,
        })
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.epochs.dim().1
    }

    pub fn samples_per_epoch(&self) -> usize {
        self.epochs.dim().2
    }

    pub fn window_s(&self) -> f64 {
        self.window_s
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn epoch_starts(&self) -> &[usize] {
        &self.epoch_starts
    }

    /// Epochs as an (epoch, channel, sample) array.
    pub fn data(&self) -> &Array3<f64> {
        &self.epochs
    }

    /// One epoch as a channels x samples view.
    pub fn epoch(&self, index: usize) -> ndarray::ArrayView2<'_, f64> {
        self.epochs.slice(s![index, .., ..])
    }

    /// New set holding only the epochs at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        let (_, n_c, len) = self.epochs.dim();
        let mut out = Array3::zeros((indices.len(), n_c, len));
        let mut starts = Vec::with_capacity(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            out.slice_mut(s![row, .., ..]).assign(&self.epoch(idx));
            starts.push(self.epoch_starts[idx]);
        }
        EpochSet {
            epochs: out,
            window_s: self.window_s,
            sample_rate_hz: self.sample_rate_hz,
            epoch_starts: starts,
        }
    }

    /// Copy with each epoch's per-channel mean removed.
    pub fn demeaned(&self) -> EpochSet {
        let mut epochs = self.epochs.clone();
        let len = self.samples_per_epoch() as f64;
        for mut epoch in epochs.outer_iter_mut() {
            for mut row in epoch.outer_iter_mut() {
                let mean = row.sum() / len;
                row.mapv_inplace(|v| v - mean);
            }
        }
        EpochSet {
            epochs,
            window_s: self.window_s,
            sample_rate_hz: self.sample_rate_hz,
            epoch_starts: self.epoch_starts.clone(),
        }
    }
}

/// Splits a recording into non-overlapping epochs of `window_s` seconds.
///
/// Returns `floor(n_samples / epoch_len)` epochs; a recording shorter than
/// one window yields an empty set.
pub fn epoch(x: &TimeSeriesMatrix, window_s: f64) -> Result<EpochSet> {
    let len = (window_s * x.sample_rate_hz()).round() as usize;
    if len < 1 {
        return Err(Error::InvalidSize {
            context: format!(
                "window {window_s} s at {} Hz is shorter than one sample",
                x.sample_rate_hz()
            ),
        });
    }
    let n_epochs = x.n_samples() / len;
    let n_c = x.n_channels();
    let mut epochs = Array3::zeros((n_epochs, n_c, len));
    let mut starts = Vec::with_capacity(n_epochs);
    for e in 0..n_epochs {
        let start = e * len;
        epochs
            .slice_mut(s![e, .., ..])
            .assign(&x.data().slice(s![.., start..start + len]));
        starts.push(start);
    }
    Ok(EpochSet {
        epochs,
        window_s,
        sample_rate_hz: x.sample_rate_hz(),
        epoch_starts: starts,
    })
}

/// Re-references each sample against the instantaneous mean across channels.
pub fn common_average_reference(x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let n_c = x.n_channels();
    if n_c < 2 {
        return Err(Error::DegenerateReference { channels: n_c });
    }
    let mut data = x.data().clone();
    let scale = 1.0 / n_c as f64;
    for mut col in data.columns_mut() {
        let mean = col.sum() * scale;
        col.mapv_inplace(|v| v - mean);
    }
    x.with_data(data)
}

/// Keeps every `factor`-th sample starting at index 0.
///
/// Lowpass filtering below the new Nyquist frequency is the caller's
/// responsibility.
pub fn decimate(x: &TimeSeriesMatrix, factor: usize) -> Result<TimeSeriesMatrix> {
    if factor == 0 {
        return Err(Error::InvalidFactor { factor });
    }
    let data = x.data().slice(s![.., ..;factor]).to_owned();
    TimeSeriesMatrix::new(
        data,
        x.sample_rate_hz() / factor as f64,
        Some(x.channel_labels().to_vec()),
    )
}

/// Flags epochs whose peak-to-peak amplitude exceeds `p2p_threshold` volts.
///
/// `x_detect` is expected to be filtered to the detection band already. An
/// epoch is flagged when any channel's max - min within it exceeds the
/// threshold. The mask aligns with [`epoch`] applied to the same recording.
pub fn mark_artifacts(
    x_detect: &TimeSeriesMatrix,
    window_s: f64,
    p2p_threshold: f64,
) -> Result<Vec<bool>> {
    if !p2p_threshold.is_finite() || p2p_threshold <= 0.0 {
        return Err(Error::InvalidThreshold {
            threshold: p2p_threshold,
        });
    }
    let epochs = epoch(x_detect, window_s)?;
    let mask = epochs
        .data()
        .outer_iter()
        .map(|ep| {
            ep.outer_iter().any(|row| {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &v in row {
                    min = min.min(v);
                    max = max.max(v);
                }
                max - min > p2p_threshold
            })
        })
        .collect();
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;

    fn series(data: Array2<f64>, rate: f64) -> TimeSeriesMatrix {
        TimeSeriesMatrix::new(data, rate, None).unwrap()
    }

    #[test]
    fn epoch_counts_and_shapes() {
        // 1200 samples at 120 Hz, 1 s windows -> 10 epochs of 120 samples
        let x = series(Array2::zeros((3, 1200)), 120.0);
        let set = epoch(&x, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 10);
        assert_eq!(set.samples_per_epoch(), 120);

        // 125 samples -> 1 epoch, 5 discarded
        let x = series(Array2::zeros((3, 125)), 120.0);
        let set = epoch(&x, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 1);

        // 60 samples -> empty set, still valid
        let x = series(Array2::zeros((3, 60)), 120.0);
        let set = epoch(&x, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 0);
    }

    #[test]
    fn epoch_concat_roundtrip() {
        let n = 3 * 7 + 4; // trailing remainder of 4 samples
        let data = Array2::from_shape_fn((2, n), |(c, t)| (c * n + t) as f64);
        let x = series(data.clone(), 7.0);
        let set = epoch(&x, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 3);
        for e in 0..set.n_epochs() {
            for c in 0..2 {
                for t in 0..7 {
                    assert_eq!(set.data()[[e, c, t]], data[[c, e * 7 + t]]);
                }
            }
        }
    }

    #[test]
    fn car_identical_rows_become_zero() {
        let x = series(
            arr2(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]),
            10.0,
        );
        let y = common_average_reference(&x).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn car_zero_mean_rows_unchanged() {
        let x = series(arr2(&[[1.0, 1.0], [-1.0, -1.0]]), 10.0);
        let y = common_average_reference(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn car_single_channel_is_error() {
        let x = series(Array2::ones((1, 10)), 10.0);
        assert!(matches!(
            common_average_reference(&x),
            Err(Error::DegenerateReference { channels: 1 })
        ));
    }

    #[test]
    fn decimate_examples() {
        let x = series(Array2::from_shape_fn((2, 1200), |(_, t)| t as f64), 1200.0);
        let same = decimate(&x, 1).unwrap();
        assert_eq!(same.data(), x.data());

        let down = decimate(&x, 10).unwrap();
        assert_eq!(down.n_samples(), 120);
        assert_eq!(down.sample_rate_hz(), 120.0);
        assert_eq!(down.data()[[0, 1]], 10.0);

        assert!(matches!(
            decimate(&x, 0),
            Err(Error::InvalidFactor { factor: 0 })
        ));
    }

    #[test]
    fn artifacts_flag_on_peak_to_peak() {
        // epoch 0 spans [-60, +60] uV on channel 1 -> p2p 120 uV > 80 uV
        let mut data = Array2::zeros((2, 20));
        data[[1, 2]] = -60e-6;
        data[[1, 5]] = 60e-6;
        // epoch 1 stays at zero
        let x = series(data, 10.0);
        let mask = mark_artifacts(&x, 1.0, 80e-6).unwrap();
        assert_eq!(mask, vec![true, false]);
    }

    #[test]
    fn artifacts_zero_threshold_is_error() {
        let x = series(Array2::zeros((2, 20)), 10.0);
        assert!(matches!(
            mark_artifacts(&x, 1.0, 0.0),
            Err(Error::InvalidThreshold { .. })
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut data = Array2::zeros((2, 4));
        data[[0, 0]] = f64::NAN;
        assert!(TimeSeriesMatrix::new(data, 10.0, None).is_err());
    }

    proptest! {
        #[test]
        fn car_columns_have_zero_mean_and_is_idempotent(
            values in proptest::collection::vec(-1e3f64..1e3, 4 * 25)
        ) {
            let data = Array2::from_shape_vec((4, 25), values).unwrap();
            let x = series(data, 100.0);
            let y = common_average_reference(&x).unwrap();
            for col in y.data().columns() {
                prop_assert!(col.sum().abs() / 4.0 <= 1e-10);
            }
            let z = common_average_reference(&y).unwrap();
            for (a, b) in y.data().iter().zip(z.data().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn artifact_mask_monotone_in_threshold(
            values in proptest::collection::vec(-1e-4f64..1e-4, 3 * 50),
            t_low in 1e-6f64..5e-5,
            t_extra in 1e-6f64..5e-5,
        ) {
            let data = Array2::from_shape_vec((3, 50), values).unwrap();
            let x = series(data, 10.0);
            let low = mark_artifacts(&x, 1.0, t_low).unwrap();
            let high = mark_artifacts(&x, 1.0, t_low + t_extra).unwrap();
            for (l, h) in low.iter().zip(high.iter()) {
                // raising the threshold never flags more epochs
                prop_assert!(!h || *l);
            }
        }
    }
}
