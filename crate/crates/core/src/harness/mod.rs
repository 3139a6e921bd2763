//! End-to-end benchmark orchestration: chronological cross-validation, the
//! three-hyperparameter sweep and result aggregation.

pub mod config;
pub mod io;
mod sweep;

pub use sweep::{
    evaluate_config, prepare_recording, run_sweep, sample_configurations, ConfigPoint,
    PreparationOptions, PreparedRecording,
};

use std::ops::Range;

use crate::error::{Error, Result};
use crate::labeling::{LabeledDataset, ProjectionKind};
use crate::spoc::{correlation_metric, pattern_angle, spoc_predict, spoc_train};

/// Hyperparameter sweep specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Dataset sizes to sample, in epochs.
    pub n_epochs_grid: Vec<usize>,
    /// Label-noise levels in `[0, 1)`.
    pub xi_grid: Vec<f64>,
    /// Relative-power quantiles for target-source selection, in `[0, 1]`.
    pub source_power_quantiles: Vec<f64>,
    /// Number of configurations to evaluate.
    pub evaluation_budget: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub projection_kind: ProjectionKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_epochs_grid: vec![50, 100, 250, 500, 750, 1000, 1500, 2000],
            xi_grid: vec![0.0, 0.1, 0.25, 0.5, 0.75, 0.9],
            source_power_quantiles: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            evaluation_budget: 1300,
            k_folds: 5,
            seed: 0,
            projection_kind: ProjectionKind::Anatomical,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_epochs_grid.is_empty()
            || self.xi_grid.is_empty()
            || self.source_power_quantiles.is_empty()
        {
            return Err(Error::InvalidConfig {
                context: "empty grid".into(),
            });
        }
        if let Some(&n) = self
            .n_epochs_grid
            .iter()
            .find(|&&n| !(50..=2000).contains(&n))
        {
            return Err(Error::InvalidConfig {
                context: format!("n_epochs {n} outside [50, 2000]"),
            });
        }
        if let Some(&xi) = self.xi_grid.iter().find(|&&xi| !(0.0..1.0).contains(&xi)) {
            return Err(Error::InvalidConfig {
                context: format!("xi {xi} outside [0, 1)"),
            });
        }
        if let Some(&q) = self
            .source_power_quantiles
            .iter()
            .find(|&&q| !(0.0..=1.0).contains(&q))
        {
            return Err(Error::InvalidConfig {
                context: format!("quantile {q} outside [0, 1]"),
            });
        }
        if self.evaluation_budget == 0 {
            return Err(Error::InvalidConfig {
                context: "evaluation budget must be >= 1".into(),
            });
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidConfig {
                context: format!("k_folds {} < 2", self.k_folds),
            });
        }
        Ok(())
    }
}

/// Contiguous, time-ordered test folds covering `[0, n_epochs)`.
///
/// Fold sizes differ by at most one; the remainder is spread over the
/// earliest folds.
pub fn chronological_folds(n_epochs: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || n_epochs < k {
        return Err(Error::InsufficientData {
            got: n_epochs,
            needed: k,
        });
    }
    let base = n_epochs / k;
    let remainder = n_epochs % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < remainder);
        folds.push(start..start + size);
        start += size;
    }
    Ok(folds)
}

/// Per-fold scores of one cross-validated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct FoldScore {
    pub fold: usize,
    pub rho: f64,
    /// Angle between estimated and ground-truth pattern; absent without a
    /// known pattern.
    pub alpha_rad: Option<f64>,
}

/// Cross-validation outcome.
#[derive(Debug, Clone)]
pub struct CvResult {
    /// Fold-averaged correlation (headline metric).
    pub mean_rho: f64,
    /// Correlation over the concatenated test-fold predictions.
    pub pooled_rho: f64,
    pub mean_alpha_rad: Option<f64>,
    pub folds: Vec<FoldScore>,
}

/// Chronological k-fold evaluation training and testing on the dataset's own
/// labels.
pub fn run_cv(dataset: &LabeledDataset, k: usize, shrinkage: f64) -> Result<CvResult> {
    run_cv_with(dataset, None, k, shrinkage)
}

/// Chronological k-fold evaluation.
///
/// When `train_labels` is given (aligned with all epochs of the dataset, as
/// produced by noise injection) the model is trained on those, while `rho`
/// is always computed against the dataset's clean labels. The pattern angle
/// is reported per fold if the dataset carries a ground-truth pattern.
pub fn run_cv_with(
    dataset: &LabeledDataset,
    train_labels: Option<&[f64]>,
    k: usize,
    shrinkage: f64,
) -> Result<CvResult> {
    if let Some(labels) = train_labels {
        if labels.len() != dataset.n_epochs() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{} training labels for {} epochs",
                    labels.len(),
                    dataset.n_epochs()
                ),
            });
        }
    }
    let good = dataset.good_indices();
    let folds = chronological_folds(good.len(), k)?;

    let mut scores = Vec::with_capacity(k);
    let mut pooled_pred = Vec::new();
    let mut pooled_truth = Vec::new();
    for (fold, range) in folds.into_iter().enumerate() {
        let test_idx: Vec<usize> = good[range.clone()].to_vec();
        let train_idx: Vec<usize> = good[..range.start]
            .iter()
            .chain(good[range.end..].iter())
            .copied()
            .collect();

        let pick = |source: &[f64], idx: &[usize]| -> Vec<f64> {
            idx.iter().map(|&i| source[i]).collect()
        };
        let fit_labels = pick(train_labels.unwrap_or(dataset.labels()), &train_idx);
        let train_ds = LabeledDataset::new(
            dataset.epochs().subset(&train_idx),
            fit_labels,
            None,
            dataset.meta().clone(),
        )?;
        let model = spoc_train(&train_ds, shrinkage)?;

        let predictions = spoc_predict(&model, &dataset.epochs().subset(&test_idx))?;
        let truth = pick(dataset.labels(), &test_idx);
        let rho = correlation_metric(&predictions, &truth)?;
        let alpha_rad = dataset
            .ground_truth_pattern()
            .map(|a| pattern_angle(a, &model.pattern))
            .transpose()?;

        pooled_pred.extend(predictions);
        pooled_truth.extend(truth);
        scores.push(FoldScore {
            fold,
            rho,
            alpha_rad,
        });
    }

    let mean_rho = scores.iter().map(|s| s.rho).sum::<f64>() / scores.len() as f64;
    let alphas: Vec<f64> = scores.iter().filter_map(|s| s.alpha_rad).collect();
    let mean_alpha_rad = if alphas.is_empty() {
        None
    } else {
        Some(alphas.iter().sum::<f64>() / alphas.len() as f64)
    };
    let pooled_rho = correlation_metric(&pooled_pred, &pooled_truth)?;
    Ok(CvResult {
        mean_rho,
        pooled_rho,
        mean_alpha_rad,
        folds: scores,
    })
}

/// One evaluated sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config_id: usize,
    pub n_epochs: usize,
    pub xi: f64,
    /// Requested relative-power quantile (the grid value).
    pub rel_power: f64,
    /// Per-configuration seed used for noise injection.
    pub seed: u64,
    pub mean_rho: f64,
    /// `NaN` when no ground-truth pattern was available.
    pub mean_alpha_rad: f64,
    pub folds: Vec<FoldScore>,
}

/// Axis to marginalize sweep results over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalDimension {
    NEpochs,
    Xi,
    RelPower,
}

impl std::str::FromStr for MarginalDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_epochs" => Ok(Self::NEpochs),
            "xi" => Ok(Self::Xi),
            "rel_power" => Ok(Self::RelPower),
            other => Err(Error::InvalidDimension {
                dimension: other.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for MarginalDimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NEpochs => write!(f, "n_epochs"),
            Self::Xi => write!(f, "xi"),
            Self::RelPower => write!(f, "rel_power"),
        }
    }
}

/// Mean and spread of both metrics at one grid value of the chosen axis.
#[derive(Debug, Clone, Copy)]
pub struct MarginalRow {
    pub value: f64,
    pub n_configs: usize,
    pub mean_rho: f64,
    pub std_rho: f64,
    /// `NaN` when none of the grouped configurations carried an angle.
    pub mean_alpha_rad: f64,
    pub std_alpha_rad: f64,
}

/// Groups results by the chosen dimension's grid value and reports mean and
/// standard deviation of both metrics, ordered by grid value.
pub fn marginalize(
    results: &[SweepResult],
    dimension: MarginalDimension,
) -> Result<Vec<MarginalRow>> {
    if results.is_empty() {
        return Err(Error::NoData);
    }
    let key = |r: &SweepResult| -> f64 {
        match dimension {
            MarginalDimension::NEpochs => r.n_epochs as f64,
            MarginalDimension::Xi => r.xi,
            MarginalDimension::RelPower => r.rel_power,
        }
    };
    let mut values: Vec<f64> = results.iter().map(key).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();

    let stats = |samples: &[f64]| -> (f64, f64) {
        if samples.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };

    Ok(values
        .into_iter()
        .map(|value| {
            let group: Vec<&SweepResult> =
                results.iter().filter(|r| key(r) == value).collect();
            let rhos: Vec<f64> = group.iter().map(|r| r.mean_rho).collect();
            let alphas: Vec<f64> = group
                .iter()
                .map(|r| r.mean_alpha_rad)
                .filter(|a| a.is_finite())
                .collect();
            let (mean_rho, std_rho) = stats(&rhos);
            let (mean_alpha_rad, std_alpha_rad) = stats(&alphas);
            MarginalRow {
                value,
                n_configs: group.len(),
                mean_rho,
                std_rho,
                mean_alpha_rad,
                std_alpha_rad,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn folds_even_split() {
        let folds = chronological_folds(100, 5).unwrap();
        assert_eq!(
            folds,
            vec![0..20, 20..40, 40..60, 60..80, 80..100]
        );
    }

    #[test]
    fn folds_remainder_goes_first() {
        let folds = chronological_folds(7, 5).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
        assert_eq!(folds.first().unwrap().start, 0);
        assert_eq!(folds.last().unwrap().end, 7);
    }

    #[test]
    fn folds_too_few_epochs() {
        assert!(matches!(
            chronological_folds(3, 5),
            Err(Error::InsufficientData { got: 3, needed: 5 })
        ));
    }

    #[test]
    fn marginalize_single_and_pairs() {
        let mk = |id: usize, xi: f64, rho: f64| SweepResult {
            config_id: id,
            n_epochs: 100,
            xi,
            rel_power: 1.0,
            seed: 0,
            mean_rho: rho,
            mean_alpha_rad: f64::NAN,
            folds: vec![],
        };
        let single = marginalize(&[mk(0, 0.5, 0.7)], MarginalDimension::Xi).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].mean_rho, 0.7);
        assert_eq!(single[0].std_rho, 0.0);

        let rows = marginalize(
            &[mk(0, 0.5, 0.2), mk(1, 0.5, 0.4), mk(2, 0.0, 0.9)],
            MarginalDimension::Xi,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].value, 0.0);
        assert!((rows[1].mean_rho - 0.3).abs() <= 1e-12);
        assert_eq!(rows[1].n_configs, 2);
    }

    #[test]
    fn marginalize_unknown_dimension_str() {
        assert!(matches!(
            "bananas".parse::<MarginalDimension>(),
            Err(Error::InvalidDimension { .. })
        ));
        assert_eq!(
            "xi".parse::<MarginalDimension>().unwrap(),
            MarginalDimension::Xi
        );
    }

    #[test]
    fn marginalize_empty_is_error() {
        assert!(matches!(
            marginalize(&[], MarginalDimension::Xi),
            Err(Error::NoData)
        ));
    }

    #[test]
    fn config_validation() {
        let mut config = SweepConfig::default();
        assert!(config.validate().is_ok());
        config.xi_grid = vec![1.0];
        assert!(config.validate().is_err());
        config.xi_grid = vec![];
        assert!(config.validate().is_err());
        config = SweepConfig::default();
        config.k_folds = 1;
        assert!(config.validate().is_err());
        config = SweepConfig::default();
        config.n_epochs_grid = vec![10];
        assert!(config.validate().is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_all_epochs(n in 5usize..500, k in 2usize..8) {
            prop_assume!(n >= k);
            let folds = chronological_folds(n, k).unwrap();
            prop_assert_eq!(folds.len(), k);
            // contiguous, ordered, disjoint, covering [0, n)
            prop_assert_eq!(folds[0].start, 0);
            for pair in folds.windows(2) {
                prop_assert_eq!(pair[0].end, pair[1].start);
            }
            prop_assert_eq!(folds[k - 1].end, n);
            // sizes differ by at most one
            let sizes: Vec<usize> = folds.iter().map(|r| r.len()).collect();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
