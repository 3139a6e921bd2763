//! The benchmarked decoder: spatial filters whose output band-power covaries
//! with the labels.
//!
//! Training builds the plain and label-weighted covariances of the epoched
//! data and solves their generalized eigenproblem; the eigenvector of the
//! largest eigenvalue is kept as the spatial filter. Prediction is the
//! per-epoch variance of the filtered signal.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::labeling::LabeledDataset;
use crate::linalg::{
    covariance, generalized_eig, weighted_covariance, weighted_covariance_raw, SymmetricMatrix,
};
use crate::timeseries::EpochSet;

/// Trained spatial filter with its interpretable pattern.
#[derive(Debug, Clone)]
pub struct SpocModel {
    /// Spatial filter, normalized so `w^T C w = 1` on the training
    /// covariance.
    pub w: Array1<f64>,
    /// Estimated forward pattern of the decoded source, `C w / (w^T C w)`.
    pub pattern: Array1<f64>,
    /// Generalized eigenvalue of the retained component.
    pub eigenvalue: f64,
    /// Full eigenvalue spectrum, for diagnostics.
    pub spectrum: Vec<f64>,
    /// Training band in Hz.
    pub band: (f64, f64),
    /// Training covariance (demeaned epochs).
    pub training_c: SymmetricMatrix,
}

/// Training switches beyond the shrinkage level.
#[derive(Debug, Clone, Copy)]
pub struct SpocOptions {
    pub shrinkage: f64,
    /// Standardize labels to zero mean / unit variance before weighting
    /// (default). Disable to weight with the raw labels.
    pub standardize_labels: bool,
    /// Select the component by largest `|lambda|` instead of largest signed
    /// eigenvalue.
    pub select_by_magnitude: bool,
}

impl Default for SpocOptions {
    fn default() -> Self {
        Self {
            shrinkage: 1e-8,
            standardize_labels: true,
            select_by_magnitude: false,
        }
    }
}

/// Trains on the good epochs of a dataset with the default options.
pub fn spoc_train(dataset: &LabeledDataset, shrinkage: f64) -> Result<SpocModel> {
    spoc_train_with(
        dataset,
        SpocOptions {
            shrinkage,
            ..SpocOptions::default()
        },
    )
}

/// Trains on the good epochs of a dataset.
pub fn spoc_train_with(dataset: &LabeledDataset, options: SpocOptions) -> Result<SpocModel> {
    let good = dataset.good_indices();
    if good.len() < 2 {
        return Err(Error::InsufficientData {
            got: good.len(),
            needed: 2,
        });
    }
    let epochs = dataset.epochs().subset(&good).demeaned();
    let labels: Vec<f64> = good.iter().map(|&i| dataset.labels()[i]).collect();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    if labels.iter().all(|&v| (v - mean).abs() <= 0.0) {
        return Err(Error::DegenerateLabels);
    }

    let c = covariance(&epochs)?;
    let c_z = if options.standardize_labels {
        weighted_covariance(&epochs, &labels)?
    } else {
        weighted_covariance_raw(&epochs, &labels)?
    };
    let gevd = generalized_eig(&c_z, &c, options.shrinkage)?;

    let selected = if options.select_by_magnitude {
        gevd.eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    } else {
        0
    };
    let w = gevd.eigenvectors.column(selected).to_owned();
    let cw = c.data().dot(&w);
    let wcw = w.dot(&cw);
    if !wcw.is_finite() || wcw == 0.0 {
        return Err(Error::DegenerateLabels);
    }
    let pattern = cw / wcw;
    if pattern.iter().any(|v| !v.is_finite()) || pattern.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidPattern {
            context: "estimated pattern is zero or non-finite".into(),
        });
    }

    Ok(SpocModel {
        w,
        pattern,
        eigenvalue: gevd.eigenvalues[selected],
        spectrum: gevd.eigenvalues,
        band: dataset.band(),
        training_c: c,
    })
}

/// Predicts the per-epoch label as the variance of the filtered epoch.
pub fn spoc_predict(model: &SpocModel, epochs: &EpochSet) -> Result<Vec<f64>> {
    if epochs.n_channels() != model.w.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "filter has {} channels, epochs have {}",
                model.w.len(),
                epochs.n_channels()
            ),
        });
    }
    let len = epochs.samples_per_epoch() as f64;
    Ok(epochs
        .data()
        .outer_iter()
        .map(|ep| {
            let s = model.w.dot(&ep);
            let mean = s.sum() / len;
            s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len
        })
        .collect())
}

/// Pearson correlation between predicted and true per-epoch labels.
pub fn correlation_metric(z_hat: &[f64], z: &[f64]) -> Result<f64> {
    if z_hat.len() != z.len() {
        return Err(Error::ShapeMismatch {
            context: format!("{} predictions vs {} labels", z_hat.len(), z.len()),
        });
    }
    if z.len() < 2 {
        return Err(Error::UndefinedCorrelation {
            context: "need at least 2 values".into(),
        });
    }
    let n = z.len() as f64;
    let mean_a = z_hat.iter().sum::<f64>() / n;
    let mean_b = z.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (a, b) in z_hat.iter().zip(z) {
        num += (a - mean_a) * (b - mean_b);
        var_a += (a - mean_a).powi(2);
        var_b += (b - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::UndefinedCorrelation {
            context: "constant input".into(),
        });
    }
    Ok((num / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Sign-folded angle between two patterns, in `[0, pi/2]` radians.
pub fn pattern_angle(a_true: &Array1<f64>, a_est: &Array1<f64>) -> Result<f64> {
    if a_true.len() != a_est.len() {
        return Err(Error::ShapeMismatch {
            context: format!("patterns of length {} and {}", a_true.len(), a_est.len()),
        });
    }
    let norm_true = a_true.dot(a_true).sqrt();
    let norm_est = a_est.dot(a_est).sqrt();
    if norm_true == 0.0 || norm_est == 0.0 {
        return Err(Error::InvalidPattern {
            context: "zero-length pattern".into(),
        });
    }
    let cos = (a_true.dot(a_est) / (norm_true * norm_est)).clamp(-1.0, 1.0);
    let angle = cos.acos();
    Ok(if angle <= std::f64::consts::FRAC_PI_2 {
        angle
    } else {
        std::f64::consts::PI - angle
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{DatasetMeta, LabeledDataset};
    use ndarray::{arr1, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn make_dataset(epochs: Array3<f64>, labels: Vec<f64>) -> LabeledDataset {
        let len = epochs.dim().2;
        let set =
            crate::timeseries::EpochSet::from_blocks(epochs, 1.0, len as f64, None).unwrap();
        LabeledDataset::new(set, labels, None, DatasetMeta::bare((8.0, 12.0))).unwrap()
    }

    /// Epochs where channel 0's power follows the labels and channel 1 is
    /// independent noise.
    fn power_coded_epochs(
        n_epochs: usize,
        len: usize,
        seed: u64,
    ) -> (Array3<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut epochs = Array3::zeros((n_epochs, 2, len));
        let mut labels = Vec::with_capacity(n_epochs);
        for e in 0..n_epochs {
            let z = 0.5 + 2.0 * (e as f64 / n_epochs as f64);
            labels.push(z);
            for t in 0..len {
                epochs[[e, 0, t]] = z.sqrt() * rng.sample::<f64, _>(StandardNormal);
                epochs[[e, 1, t]] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        (epochs, labels)
    }

    #[test]
    fn filter_aligns_with_power_coded_channel() {
        let (epochs, labels) = power_coded_epochs(400, 80, 1);
        let dataset = make_dataset(epochs, labels);
        let model = spoc_train(&dataset, 1e-8).unwrap();
        let e1 = arr1(&[1.0, 0.0]);
        let angle = pattern_angle(&e1, &model.w).unwrap();
        assert!(angle.to_degrees() <= 5.0, "angle {} deg", angle.to_degrees());
    }

    #[test]
    fn constant_labels_rejected() {
        let (epochs, _) = power_coded_epochs(20, 40, 2);
        let dataset = make_dataset(epochs, vec![3.0; 20]);
        assert!(matches!(
            spoc_train(&dataset, 1e-8),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn prediction_is_epoch_variance_of_filtered_signal() {
        let (epochs, labels) = power_coded_epochs(50, 200, 3);
        let dataset = make_dataset(epochs.clone(), labels);
        let model = spoc_train(&dataset, 1e-8).unwrap();

        // zero epochs predict zero
        let zeros = crate::timeseries::EpochSet::from_blocks(
            Array3::zeros((3, 2, 200)),
            1.0,
            200.0,
            None,
        )
        .unwrap();
        let z_hat = spoc_predict(&model, &zeros).unwrap();
        assert!(z_hat.iter().all(|&v| v == 0.0));

        // unit filter on unit-variance noise predicts ~1
        let unit_model = SpocModel {
            w: arr1(&[1.0, 0.0]),
            ..model.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Array3::from_shape_fn((1, 2, 20_000), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let set = crate::timeseries::EpochSet::from_blocks(noise, 1.0, 20_000.0, None).unwrap();
        let z_hat = spoc_predict(&unit_model, &set).unwrap();
        assert!((z_hat[0] - 1.0).abs() <= 0.05, "variance {}", z_hat[0]);

        // quadratic homogeneity
        let scaled = set.data().mapv(|v| 3.0 * v);
        let scaled_set =
            crate::timeseries::EpochSet::from_blocks(scaled, 1.0, 20_000.0, None).unwrap();
        let z_scaled = spoc_predict(&unit_model, &scaled_set).unwrap();
        assert!((z_scaled[0] - 9.0 * z_hat[0]).abs() <= 1e-9);
    }

    #[test]
    fn correlation_metric_basics() {
        let z = [1.0, 2.0, 3.0, 4.0];
        assert!((correlation_metric(&z, &z).unwrap() - 1.0).abs() <= 1e-12);
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        assert!((correlation_metric(&neg, &z).unwrap() + 1.0).abs() <= 1e-12);
        let affine: Vec<f64> = z.iter().map(|v| 2.5 * v + 7.0).collect();
        assert!((correlation_metric(&affine, &z).unwrap() - 1.0).abs() <= 1e-12);
        assert!(matches!(
            correlation_metric(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation { .. })
        ));
        assert!(matches!(
            correlation_metric(&[1.0], &[1.0]),
            Err(Error::UndefinedCorrelation { .. })
        ));
    }

    #[test]
    fn pattern_angle_folding() {
        let a = arr1(&[1.0, 2.0, -1.0]);
        assert!(pattern_angle(&a, &a).unwrap() <= 1e-12);
        let neg = -a.clone();
        assert!(pattern_angle(&a, &neg).unwrap() <= 1e-12);
        let orth = arr1(&[2.0, -1.0, 0.0]);
        assert!((pattern_angle(&a, &orth).unwrap() - std::f64::consts::FRAC_PI_2).abs() <= 1e-12);
        let zero = arr1(&[0.0, 0.0, 0.0]);
        assert!(matches!(
            pattern_angle(&a, &zero),
            Err(Error::InvalidPattern { .. })
        ));
    }

    #[test]
    fn sign_flip_of_filter_changes_nothing() {
        let (epochs, labels) = power_coded_epochs(100, 60, 5);
        let dataset = make_dataset(epochs.clone(), labels.clone());
        let model = spoc_train(&dataset, 1e-8).unwrap();
        let flipped = SpocModel {
            w: -model.w.clone(),
            ..model.clone()
        };
        let set = crate::timeseries::EpochSet::from_blocks(epochs, 1.0, 60.0, None).unwrap();
        let z1 = spoc_predict(&model, &set).unwrap();
        let z2 = spoc_predict(&flipped, &set).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let a1 = pattern_angle(&model.pattern, &model.w).unwrap();
        let a2 = pattern_angle(&model.pattern, &flipped.w).unwrap();
        assert!((a1 - a2).abs() <= 1e-12);
    }

    #[test]
    fn trained_filter_beats_random_filters() {
        let (epochs, labels) = power_coded_epochs(300, 50, 6);
        let dataset = make_dataset(epochs.clone(), labels.clone());
        let model = spoc_train(&dataset, 0.0).unwrap();

        let good = dataset.good_indices();
        let demeaned = dataset.epochs().subset(&good).demeaned();
        let c = covariance(&demeaned).unwrap();
        let c_z = weighted_covariance(&demeaned, &labels).unwrap();

        let objective = |w: &Array1<f64>| -> f64 { w.dot(&c_z.data().dot(w)) };
        let trained = objective(&model.w);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let u = Array1::from_shape_fn(2, |_| rng.sample::<f64, _>(StandardNormal));
            let scale = u.dot(&c.data().dot(&u)).sqrt();
            let u = u / scale; // unit C-norm
            assert!(
                objective(&u) <= trained + 1e-6 * (1.0 + trained.abs()),
                "random filter beat the trained one"
            );
        }
    }

    #[test]
    fn channel_permutation_permutes_filter_and_pattern() {
        let (epochs, labels) = power_coded_epochs(200, 60, 8);
        let dataset = make_dataset(epochs.clone(), labels.clone());
        let model = spoc_train(&dataset, 1e-8).unwrap();

        // swap the two channels
        let mut swapped = Array3::zeros(epochs.dim());
        for e in 0..epochs.dim().0 {
            for t in 0..epochs.dim().2 {
                swapped[[e, 0, t]] = epochs[[e, 1, t]];
                swapped[[e, 1, t]] = epochs[[e, 0, t]];
            }
        }
        let dataset_swapped = make_dataset(swapped.clone(), labels);
        let model_swapped = spoc_train(&dataset_swapped, 1e-8).unwrap();

        // predictions agree epoch-wise
        let set = crate::timeseries::EpochSet::from_blocks(epochs, 1.0, 60.0, None).unwrap();
        let set_swapped =
            crate::timeseries::EpochSet::from_blocks(swapped, 1.0, 60.0, None).unwrap();
        let z1 = spoc_predict(&model, &set).unwrap();
        let z2 = spoc_predict(&model_swapped, &set_swapped).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        // filter components swapped (up to global sign)
        let s = if model.w[0] * model_swapped.w[1] >= 0.0 {
            1.0
        } else {
            -1.0
        };
        assert!((model.w[0] - s * model_swapped.w[1]).abs() <= 1e-9);
        assert!((model.w[1] - s * model_swapped.w[0]).abs() <= 1e-9);
    }

    #[test]
    fn pattern_angle_improves_with_snr() {
        // X(e) = a s(e) + isotropic noise; higher SNR pulls the estimated
        // pattern towards a
        let a = arr1(&[0.8, -0.5, 0.3, 0.1]);
        let mut mean_angles = Vec::new();
        for (snr_idx, snr_db) in [0.0, 10.0, 20.0].iter().enumerate() {
            let amp = 10.0f64.powf(snr_db / 20.0);
            let mut angles = Vec::new();
            for rep in 0..5 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + 17 * rep + snr_idx as u64);
                let n_epochs = 200;
                let len = 40;
                let mut epochs = Array3::zeros((n_epochs, 4, len));
                let mut labels = Vec::new();
                for e in 0..n_epochs {
                    let z: f64 = 0.5 + rng.gen::<f64>() * 2.0;
                    labels.push(z);
                    for t in 0..len {
                        let s = amp * z.sqrt() * rng.sample::<f64, _>(StandardNormal);
                        for c in 0..4 {
                            epochs[[e, c, t]] =
                                a[c] * s + rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
                let dataset = make_dataset(epochs, labels);
                let model = spoc_train(&dataset, 1e-8).unwrap();
                angles.push(pattern_angle(&a, &model.pattern).unwrap());
            }
            mean_angles.push(angles.iter().sum::<f64>() / angles.len() as f64);
        }
        assert!(
            mean_angles[0] > mean_angles[1] && mean_angles[1] > mean_angles[2],
            "angles not monotone over SNR: {mean_angles:?}"
        );
    }
}
