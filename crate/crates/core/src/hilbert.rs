//! Analytic-signal envelope via the frequency domain.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Analytic signal of a real series: negative frequencies zeroed, positive
/// frequencies doubled, DC and Nyquist kept.
pub fn analytic_signal(x: &[f64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n < 8 {
        return Err(Error::InsufficientSamples { got: n, needed: 8 });
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    for value in buf.iter_mut().take(half).skip(1) {
        *value *= 2.0;
    }
    let first_negative = if n.is_multiple_of(2) { half + 1 } else { half };
    for value in buf.iter_mut().skip(first_negative) {
        *value = Complex64::new(0.0, 0.0);
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

/// Instantaneous amplitude of a narrow-band series, `|analytic(x)|`.
pub fn hilbert_envelope(x: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(x)?.into_iter().map(|v| v.norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_amplitude_sinusoid() {
        let rate = 120.0;
        let n = 1200; // 10 s
        let x: Vec<f64> = (0..n)
            .map(|i| 2.0 * (2.0 * PI * 10.0 * i as f64 / rate).sin())
            .collect();
        let env = hilbert_envelope(&x).unwrap();
        let edge = 60; // 0.5 s
        for &v in &env[edge..n - edge] {
            assert!((v - 2.0).abs() <= 0.02, "envelope {v}");
        }
    }

    #[test]
    fn tracks_slow_amplitude_modulation() {
        let rate = 120.0;
        let n = 1200;
        let modulation: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (2.0 * PI * 1.0 * i as f64 / rate).sin())
            .collect();
        let x: Vec<f64> = (0..n)
            .map(|i| modulation[i] * (2.0 * PI * 10.0 * i as f64 / rate).sin())
            .collect();
        let env = hilbert_envelope(&x).unwrap();
        let edge = n / 5;
        for i in edge..n - edge {
            assert!(
                (env[i] - modulation[i]).abs() <= 0.02 * modulation[i],
                "t = {i}: {} vs {}",
                env[i],
                modulation[i]
            );
        }
    }

    #[test]
    fn zero_input_zero_envelope() {
        let env = hilbert_envelope(&[0.0; 64]).unwrap();
        assert!(env.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_input_is_error() {
        assert!(matches!(
            hilbert_envelope(&[1.0; 4]),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            hilbert_envelope(&[]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn positive_homogeneity(
            values in proptest::collection::vec(-10.0f64..10.0, 64),
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
            let env = hilbert_envelope(&values).unwrap();
            let env_scaled = hilbert_envelope(&scaled).unwrap();
            let norm = env.iter().fold(0.0f64, |m, &v| m.max(v)).max(1e-300);
            for (a, b) in env.iter().zip(env_scaled.iter()) {
                prop_assert!((c * a - b).abs() <= 1e-12 * c * norm);
            }
        }
    }
}
