//! Synthetic multichannel recordings with a planted narrow-band target.
//!
//! Background sources carry a 1/f power spectrum (inverse-FFT spectral
//! shaping with random phases); the target source is band-limited noise under
//! a slowly varying amplitude envelope. Sensor noise is isotropic Gaussian.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter::{design_butterworth_bandpass, filtfilt_1d, fir_lowpass_kernel};
use crate::hilbert::hilbert_envelope;
use crate::source::LeadField;
use crate::timeseries::TimeSeriesMatrix;

/// Average per-channel RMS of generated recordings, in volts. Low enough
/// that the default 80 uV peak-to-peak artifact threshold flags only rare
/// excursions of the synthetic noise.
const TARGET_CHANNEL_RMS: f64 = 5e-6;

/// Fraction of background sensor power assigned to the isotropic sensor
/// noise floor.
const SENSOR_NOISE_FRACTION: f64 = 0.1;

/// Log-amplitude spread of the background sources. A lognormal strength
/// distribution leaves most sources weak relative to the strongest one, as
/// observed for reconstructed source power on real recordings.
const BACKGROUND_LOG_SIGMA: f64 = 1.0;

/// Everything needed to score a decoder against a synthetic recording.
#[derive(Debug, Clone)]
pub struct SyntheticGroundTruth {
    pub target_source_index: usize,
    /// Forward pattern of the target source (lead-field column).
    pub true_pattern: Array1<f64>,
    /// Instantaneous amplitude of the target source, one value per sample.
    pub true_envelope: Vec<f64>,
    pub snr_db: f64,
    /// Standard deviation of the isotropic sensor noise, in volts.
    pub noise_sigma: f64,
}

/// Unit-variance noise with power spectral density proportional to
/// `1 / f^exponent`.
fn shaped_noise(n: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=half {
        let amp = (k as f64).powf(-exponent / 2.0);
        let phase = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        let value = Complex64::from_polar(amp, phase);
        if k == half && n.is_multiple_of(2) {
            // Nyquist bin must stay real
            spectrum[k] = Complex64::new(amp * phase.cos().signum(), 0.0);
        } else {
            spectrum[k] = value;
            spectrum[n - k] = value.conj();
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let series: Vec<f64> = spectrum.iter().map(|v| v.re).collect();
    normalize_variance(series)
}

fn normalize_variance(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        x.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    x
}

/// Band-limited noise under a slow (<= 1 Hz) non-negative envelope, unit
/// variance.
fn target_source(
    n: usize,
    sample_rate_hz: f64,
    band: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let spec = design_butterworth_bandpass(band.0, band.1, 5, sample_rate_hz)?;
    let white: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let carrier = filtfilt_1d(&spec, &white)?;

    // rectified Gaussian noise, lowpassed below 1 Hz
    let raw: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
        .collect();
    let cutoff = 1.0 / (sample_rate_hz / 2.0);
    let kernel = fir_lowpass_kernel(cutoff, (1.5 * sample_rate_hz) as usize);
    let envelope = convolve_reflect(&raw, &kernel);

    let source: Vec<f64> = carrier
        .iter()
        .zip(envelope.iter())
        .map(|(c, e)| c * e.max(0.0))
        .collect();
    Ok(normalize_variance(source))
}

fn convolve_reflect(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    let n = x.len() as isize;
    let at = |idx: isize| -> f64 {
        let mut i = idx;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
        x[i.clamp(0, n - 1) as usize]
    };
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * at(i + k as isize - half as isize))
                .sum()
        })
        .collect()
}

/// Generates a recording `X = A S + E` with ground truth.
///
/// Background sources are independent 1/f noise; the target source is
/// narrow-band noise in `target_band` whose amplitude is scaled so that its
/// sensor-space power relative to the combined background-plus-noise power
/// matches `snr_db` (`-inf` plants no target at all). The whole recording is
/// rescaled to a 10 uV average channel RMS.
pub fn synth_recording(
    a: &LeadField,
    duration_s: f64,
    sample_rate_hz: f64,
    target_band: (f64, f64),
    target_source_index: usize,
    snr_db: f64,
    seed: u64,
) -> Result<(TimeSeriesMatrix, SyntheticGroundTruth)> {
    let n_s = a.n_sources();
    let n_c = a.n_channels();
    if target_source_index >= n_s {
        return Err(Error::InvalidIndex {
            index: target_source_index,
            sources: n_s,
        });
    }
    if duration_s < 4.0 {
        return Err(Error::InvalidSize {
            context: format!("duration {duration_s} s too short, need >= 4 s"),
        });
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sources = Array2::zeros((n_s, n));
    for j in 0..n_s {
        if j == target_source_index {
            let s = target_source(n, sample_rate_hz, target_band, &mut rng)?;
            sources.row_mut(j).assign(&Array1::from_vec(s));
        } else {
            let amplitude =
                (BACKGROUND_LOG_SIGMA * rng.sample::<f64, _>(StandardNormal)).exp();
            let s = shaped_noise(n, 1.0, &mut rng);
            sources
                .row_mut(j)
                .assign(&(Array1::from_vec(s) * amplitude));
        }
    }

    // sensor-space background power with the target silenced
    let mut background = sources.clone();
    background.row_mut(target_source_index).fill(0.0);
    let x_bg = a.matrix().dot(&background);
    let p_bg = x_bg.iter().map(|v| v * v).sum::<f64>() / (n_c * n) as f64;
    let sigma_sq = SENSOR_NOISE_FRACTION * p_bg;

    // unit-variance target through a unit-norm pattern spreads 1/n_c power
    // across the sensors; solve for the gain hitting the requested ratio
    let p_target_unit = 1.0 / n_c as f64;
    let gain = if snr_db == f64::NEG_INFINITY {
        0.0
    } else {
        (10.0f64.powf(snr_db / 10.0) * (p_bg + sigma_sq) / p_target_unit).sqrt()
    };
    {
        let mut row = sources.row_mut(target_source_index);
        row.mapv_inplace(|v| v * gain);
    }

    let mut x = a.matrix().dot(&sources);
    let sigma = sigma_sq.sqrt();
    for v in x.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }

    // rescale to EEG-like amplitudes, folding the factor into the sources so
    // X = A S + E still holds exactly
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / (n_c * n) as f64).sqrt();
    let scale = if rms > 0.0 { TARGET_CHANNEL_RMS / rms } else { 1.0 };
    x.mapv_inplace(|v| v * scale);
    sources.mapv_inplace(|v| v * scale);

    let target_row: Vec<f64> = sources.row(target_source_index).to_vec();
    let true_envelope = hilbert_envelope(&target_row)?;

    let recording = TimeSeriesMatrix::new(
        x,
        sample_rate_hz,
        Some(a.channel_labels().to_vec()),
    )?;
    let truth = SyntheticGroundTruth {
        target_source_index,
        true_pattern: a.pattern(target_source_index)?,
        true_envelope,
        snr_db,
        noise_sigma: sigma * scale,
    };
    Ok((recording, truth))
}
