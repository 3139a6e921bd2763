//! Cross-module checks of the full labeling -> decoding pipeline on planted
//! synthetic sources.

use phlb_core::harness::{
    evaluate_config, prepare_recording, run_cv, run_cv_with, ConfigPoint, PreparationOptions,
};
use phlb_core::labeling::{
    build_dataset, extract_labels, DatasetMeta, LabeledDataset, ProjectionKind, SourceDescriptor,
};
use phlb_core::source::{mne_inverse_operator, synth_lead_field, synth_recording};
use phlb_core::spoc::{pattern_angle, spoc_train};
use phlb_core::timeseries::TimeSeriesMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Planted-source dataset via the real labeling pipeline.
fn planted_dataset(seed: u64, duration_s: f64) -> LabeledDataset {
    let lf = synth_lead_field(16, 20, seed).unwrap();
    let target = 4;
    let (x, truth) =
        synth_recording(&lf, duration_s, 120.0, (8.0, 12.0), target, 10.0, seed + 1).unwrap();
    let op = mne_inverse_operator(&lf, 1.0).unwrap();
    let (z, _) = extract_labels(&x, &op, (8.0, 12.0), target).unwrap();

    let spec = phlb_core::filter::design_butterworth_bandpass(8.0, 12.0, 5, 120.0).unwrap();
    let banded = phlb_core::filter::filtfilt(&spec, &x).unwrap();
    let meta = DatasetMeta {
        band: (8.0, 12.0),
        source: SourceDescriptor {
            projection: ProjectionKind::Anatomical,
            source_index: target,
            relative_power: 1.0,
        },
        ground_truth_pattern: Some(truth.true_pattern.clone()),
        label_mode: Default::default(),
    };
    build_dataset(&banded, &z, 1.0, None, meta).unwrap()
}

#[test]
fn planted_source_recovered_in_cross_validation() {
    let dataset = planted_dataset(1, 240.0);
    let cv = run_cv(&dataset, 5, 1e-8).unwrap();
    assert!(cv.mean_rho >= 0.9, "mean rho {}", cv.mean_rho);
    let alpha = cv.mean_alpha_rad.unwrap();
    assert!(alpha.to_degrees() <= 15.0, "alpha {} deg", alpha.to_degrees());
    // pooled and fold-averaged agree on strong data
    assert!((cv.pooled_rho - cv.mean_rho).abs() <= 0.1);
}

#[test]
fn shuffled_labels_score_near_zero() {
    let dataset = planted_dataset(2, 240.0);
    let mut shuffled = dataset.labels().to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let cv = run_cv_with(&dataset, Some(&shuffled), 5, 1e-8).unwrap();
    assert!(cv.mean_rho.abs() <= 0.1, "null rho {}", cv.mean_rho);
}

#[test]
fn no_test_set_leakage() {
    let dataset = planted_dataset(4, 120.0);
    let good = dataset.good_indices();
    let folds = phlb_core::harness::chronological_folds(good.len(), 5).unwrap();
    let test = folds[2].clone();
    let train_idx: Vec<usize> = good[..test.start]
        .iter()
        .chain(good[test.end..].iter())
        .copied()
        .collect();

    // training on the fold complement
    let labels: Vec<f64> = train_idx.iter().map(|&i| dataset.labels()[i]).collect();
    let train_ds = LabeledDataset::new(
        dataset.epochs().subset(&train_idx),
        labels.clone(),
        None,
        dataset.meta().clone(),
    )
    .unwrap();
    let model_a = spoc_train(&train_ds, 1e-8).unwrap();

    // physically deleting the test epochs first changes nothing
    let train_ds_b = LabeledDataset::new(
        dataset.epochs().subset(&train_idx),
        labels,
        None,
        dataset.meta().clone(),
    )
    .unwrap();
    let model_b = spoc_train(&train_ds_b, 1e-8).unwrap();

    assert_eq!(model_a.w, model_b.w);
    assert_eq!(model_a.pattern, model_b.pattern);
    assert_eq!(model_a.eigenvalue.to_bits(), model_b.eigenvalue.to_bits());
}

#[test]
fn benchmark_is_invariant_to_recording_scale() {
    let lf = synth_lead_field(12, 15, 5).unwrap();
    let target = 3;
    let (x, truth) = synth_recording(&lf, 120.0, 120.0, (8.0, 12.0), target, 10.0, 6).unwrap();
    let op = mne_inverse_operator(&lf, 1.0).unwrap();

    let scale = 3.5;
    let scaled = TimeSeriesMatrix::new(
        x.data() * scale,
        x.sample_rate_hz(),
        Some(x.channel_labels().to_vec()),
    )
    .unwrap();

    let spec = phlb_core::filter::design_butterworth_bandpass(8.0, 12.0, 5, 120.0).unwrap();
    let meta = DatasetMeta {
        band: (8.0, 12.0),
        source: SourceDescriptor {
            projection: ProjectionKind::Anatomical,
            source_index: target,
            relative_power: 1.0,
        },
        ground_truth_pattern: Some(truth.true_pattern.clone()),
        label_mode: Default::default(),
    };

    let build = |rec: &TimeSeriesMatrix| -> LabeledDataset {
        let (z, _) = extract_labels(rec, &op, (8.0, 12.0), target).unwrap();
        let banded = phlb_core::filter::filtfilt(&spec, rec).unwrap();
        build_dataset(&banded, &z, 1.0, None, meta.clone()).unwrap()
    };
    let base = build(&x);
    let big = build(&scaled);

    // labels scale by the square of the recording scale
    for (a, b) in base.labels().iter().zip(big.labels()) {
        assert!(
            (b - scale * scale * a).abs() <= 1e-9 * scale * scale * a.abs().max(1e-300),
            "label scaling broken: {a} vs {b}"
        );
    }

    // downstream metrics unchanged
    let cv_base = run_cv(&base, 5, 1e-8).unwrap();
    let cv_big = run_cv(&big, 5, 1e-8).unwrap();
    assert!((cv_base.mean_rho - cv_big.mean_rho).abs() <= 1e-6);
    let (a, b) = (
        cv_base.mean_alpha_rad.unwrap(),
        cv_big.mean_alpha_rad.unwrap(),
    );
    assert!((a - b).abs() <= 1e-6);
}

#[test]
fn data_driven_route_decodes_strong_planted_source() {
    let lf = synth_lead_field(12, 15, 7).unwrap();
    let (x, _) = synth_recording(&lf, 150.0, 120.0, (8.0, 12.0), 2, 10.0, 8).unwrap();
    let prepared = prepare_recording(
        &x,
        None,
        ProjectionKind::DataDriven,
        &PreparationOptions {
            ica_components: Some(8),
            ..PreparationOptions::default()
        },
    )
    .unwrap();
    let point = ConfigPoint {
        config_id: 0,
        n_epochs: 120,
        xi: 0.0,
        quantile: 1.0,
        seed: 9,
    };
    let result = evaluate_config(&prepared, &point, 5, 1e-8).unwrap();
    assert!(result.mean_rho >= 0.8, "data-driven rho {}", result.mean_rho);
    assert!(result.mean_alpha_rad.is_finite());
}

#[test]
fn anatomical_route_pattern_matches_lead_field_column() {
    let lf = synth_lead_field(16, 20, 9).unwrap();
    let target = 6;
    let (x, truth) = synth_recording(&lf, 150.0, 120.0, (8.0, 12.0), target, 10.0, 10).unwrap();
    let prepared = prepare_recording(
        &x,
        Some(&lf),
        ProjectionKind::Anatomical,
        &PreparationOptions::default(),
    )
    .unwrap();

    // the planted target should be the strongest source in-band
    let strongest = prepared.source_at_quantile(1.0).unwrap();
    assert_eq!(strongest, target);

    let dataset = prepared.dataset_at_quantile(1.0).unwrap();
    let model = spoc_train(&dataset, 1e-8).unwrap();
    let angle = pattern_angle(&truth.true_pattern, &model.pattern).unwrap();
    assert!(angle.to_degrees() <= 15.0, "angle {} deg", angle.to_degrees());
}
