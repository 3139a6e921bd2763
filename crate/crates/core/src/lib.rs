//! Benchmarking toolkit for oscillatory source decoders.
//!
//! The crate builds noiselessly-labeled decoding datasets from arbitrary
//! multichannel recordings by projecting them onto a source space, picking a
//! target source and taking its band-power envelope as the label. The labeled
//! data then drives a characterization of the SPoC decoder under controlled
//! dataset size, label noise and target-source strength.
//!
//! Pipeline overview:
//!
//! ```text
//! recording (channels x samples)
//!   ├─ bandpass (zero-phase Butterworth) ──► source projection (inverse
//!   │                                        operator or unmixing model)
//!   ├─ pick target source ──► Hilbert envelope ──► per-epoch labels
//!   ├─ epoch + artifact mask ──► LabeledDataset
//!   └─ SPoC train / predict ──► rho (correlation), alpha (pattern angle)
//! ```
//!
//! The `harness` module wraps this into chronological cross-validation, a
//! seeded hyperparameter sweep and file formats for recordings, datasets and
//! results.

pub mod error;
pub mod filter;
pub mod harness;
pub mod hilbert;
pub mod labeling;
pub mod linalg;
pub mod source;
pub mod spoc;
pub mod timeseries;

pub use error::{Error, Result};
pub use filter::{design_butterworth_bandpass, filtfilt, resample_rational, IirFilterSpec};
pub use hilbert::hilbert_envelope;
pub use labeling::{
    add_label_noise, build_dataset, extract_labels, select_target_source, LabeledDataset,
    NoiseSpec, SourceCriterion,
};
pub use linalg::{
    covariance, generalized_eig, sym_eig, weighted_covariance, whiten, EigenSolution,
    GevdSolution, SymmetricMatrix,
};
pub use source::{
    apply_inverse, fast_ica, mne_inverse_operator, relative_source_power, synth_lead_field,
    synth_recording, InverseOperator, LeadField, SyntheticGroundTruth, UnmixingModel,
};
pub use spoc::{correlation_metric, pattern_angle, spoc_predict, spoc_train, SpocModel};
pub use timeseries::{
    common_average_reference, decimate, epoch, mark_artifacts, EpochSet, TimeSeriesMatrix,
};
