//! IIR bandpass design and zero-phase filtering.
//!
//! Filters are designed from the analog Butterworth prototype: the prototype
//! poles are frequency-warped, transformed lowpass -> bandpass, mapped to the
//! z-plane with the bilinear transform and finally paired into second-order
//! sections. High-order direct-form coefficients are avoided throughout; only
//! the SOS cascade is ever evaluated.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;

/// One second-order section, denominator normalized to a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Sos {
    /// Denominator roots strictly inside the unit circle (Jury criterion).
    fn is_stable(&self) -> bool {
        let [a1, a2] = self.a;
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    fn gain_at_dc(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Steady state of the direct-form-II-transposed states for a unit step.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let s1 = (b1 + b2 - (a1 + a2) * b0) / (1.0 + a1 + a2);
        let s2 = b2 - a2 * (b0 + s1);
        [s1, s2]
    }
}

/// Digital bandpass filter realized as a cascade of second-order sections.
#[derive(Debug, Clone)]
pub struct IirFilterSpec {
    low_hz: f64,
    high_hz: f64,
    order: usize,
    sample_rate_hz: f64,
    sections: Vec<Sos>,
}

impl IirFilterSpec {
    pub fn low_hz(&self) -> f64 {
        self.low_hz
    }

    pub fn high_hz(&self) -> f64 {
        self.high_hz
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn sections(&self) -> &[Sos] {
        &self.sections
    }

    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.sample_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = Complex64::from_polar(1.0, -2.0 * w);
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |h, s| {
            h * (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[0] * z1 + s.a[1] * z2)
        })
    }

    /// Magnitude response at `f_hz`.
    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }
}

/// Designs a maximally flat digital bandpass.
///
/// `order` is the order of the analog lowpass prototype; the resulting
/// digital filter has `2 * order` poles in `order` second-order sections.
/// Band edges are pre-warped so the -3 dB points land on `low_hz` and
/// `high_hz`.
pub fn design_butterworth_bandpass(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    sample_rate_hz: f64,
) -> Result<IirFilterSpec> {
    if order == 0 {
        return Err(Error::InvalidOrder { order });
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz,
            high_hz,
            sample_rate_hz,
        });
    }

    // Analog prototype poles on the unit circle, left half-plane.
    let n = order;
    let prototype: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    // Pre-warped band edges (normalized design, fs = 2).
    let warp = |f_hz: f64| 4.0 * (PI * f_hz / sample_rate_hz).tan();
    let w_low = warp(low_hz);
    let w_high = warp(high_hz);
    let bw = w_high - w_low;
    let w0_sq = w_low * w_high;

    // Lowpass -> bandpass: each prototype pole splits into two.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for &p in &prototype {
        let t = p * (bw / 2.0);
        let disc = (t * t - w0_sq).sqrt();
        analog_poles.push(t + disc);
        analog_poles.push(t - disc);
    }

    // Bilinear transform; the analog gain is bw^n (prototype gain 1, n zeros
    // at the origin picking up no correction beyond the pole product).
    let fs2 = Complex64::new(4.0, 0.0);
    let digital_poles: Vec<Complex64> = analog_poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let pole_prod = analog_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let gain = (bw.powi(n as i32) * (fs2.powu(n as u32) / pole_prod)).re;

    let sections = pair_into_sections(&digital_poles, gain, n)?;
    for s in &sections {
        if !s.is_stable() {
            return Err(Error::InvalidBand {
                low_hz,
                high_hz,
                sample_rate_hz,
            });
        }
    }
    Ok(IirFilterSpec {
        low_hz,
        high_hz,
        order,
        sample_rate_hz,
        sections,
    })
}

/// Groups the 2n digital poles into n sections, each with zeros at z = +/-1.
fn pair_into_sections(poles: &[Complex64], gain: f64, n_sections: usize) -> Result<Vec<Sos>> {
    let mut denoms: Vec<(f64, [f64; 2])> = Vec::with_capacity(n_sections);

    let im_tol = 1e-9;
    let mut reals: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= im_tol)
        .map(|p| p.re)
        .collect();
    reals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    if !reals.len().is_multiple_of(2) {
        return Err(Error::InvalidRequest {
            context: "unpaired real pole in bandpass design".into(),
        });
    }
    for pair in reals.chunks(2) {
        let (p1, p2) = (pair[0], pair[1]);
        denoms.push((p1.abs().max(p2.abs()), [-(p1 + p2), p1 * p2]));
    }

    for p in poles.iter().filter(|p| p.im > im_tol) {
        denoms.push((p.norm(), [-2.0 * p.re, p.norm_sqr()]));
    }
    if denoms.len() != n_sections {
        return Err(Error::InvalidRequest {
            context: format!(
                "pole pairing produced {} sections, expected {n_sections}",
                denoms.len()
            ),
        });
    }

    // Sections with poles closest to the unit circle run last.
    denoms.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let g = gain.abs().powf(1.0 / n_sections as f64);
    let mut sign = gain.signum();
    Ok(denoms
        .into_iter()
        .map(|(_, a)| {
            let b = [sign * g, 0.0, -sign * g];
            sign = 1.0;
            Sos { b, a }
        })
        .collect())
}

/// Runs the cascade over one channel with per-section initial states.
fn sosfilt(sections: &[Sos], states: &mut [[f64; 2]], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(states.len(), sections.len());
    for (i, &sample) in x.iter().enumerate() {
        let mut v = sample;
        for (s, st) in sections.iter().zip(states.iter_mut()) {
            let y = s.b[0] * v + st[0];
            st[0] = s.b[1] * v - s.a[0] * y + st[1];
            st[1] = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        out[i] = v;
    }
}

/// Step-response initial states for each section, scaled through the cascade.
fn cascade_step_states(sections: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sections
        .iter()
        .map(|s| {
            let st = s.step_state();
            let scaled = [st[0] * scale, st[1] * scale];
            scale *= s.gain_at_dc();
            scaled
        })
        .collect()
}

fn filtfilt_channel(spec: &IirFilterSpec, x: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * 2 * spec.order;
    let n = x.len();
    if n <= pad {
        return Err(Error::InsufficientSamples {
            got: n,
            needed: pad + 1,
        });
    }

    // Odd reflection around both ends.
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let zi = cascade_step_states(spec.sections());
    let mut forward = vec![0.0; ext.len()];
    let mut states: Vec<[f64; 2]> = zi.iter().map(|s| [s[0] * ext[0], s[1] * ext[0]]).collect();
    sosfilt(spec.sections(), &mut states, &ext, &mut forward);

    forward.reverse();
    let mut backward = vec![0.0; forward.len()];
    let mut states: Vec<[f64; 2]> = zi
        .iter()
        .map(|s| [s[0] * forward[0], s[1] * forward[0]])
        .collect();
    sosfilt(spec.sections(), &mut states, &forward, &mut backward);
    backward.reverse();

    Ok(backward[pad..pad + n].to_vec())
}

/// Forward-backward application of `spec`: zero phase, squared magnitude.
///
/// Edge transients are handled by odd-reflection padding of length
/// `3 * 2 * order` plus step-matched initial filter states.
pub fn filtfilt(spec: &IirFilterSpec, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let mut data = x.data().clone();
    for mut row in data.rows_mut() {
        let filtered = filtfilt_channel(spec, row.as_slice().expect("row-major layout"))?;
        for (dst, src) in row.iter_mut().zip(filtered) {
            *dst = src;
        }
    }
    x.with_data(data)
}

/// Zero-phase filtering of a single channel.
pub fn filtfilt_1d(spec: &IirFilterSpec, x: &[f64]) -> Result<Vec<f64>> {
    filtfilt_channel(spec, x)
}

/// Symmetric windowed-sinc lowpass kernel with unit DC gain.
///
/// `cutoff` is a fraction of the Nyquist frequency; `half_len` taps are used
/// on each side of the center.
pub fn fir_lowpass_kernel(cutoff: f64, half_len: usize) -> Vec<f64> {
    let len = 2 * half_len + 1;
    let mut kernel = Vec::with_capacity(len);
    for i in 0..len {
        let m = i as f64 - half_len as f64;
        let sinc = if m == 0.0 {
            cutoff
        } else {
            (PI * cutoff * m).sin() / (PI * m)
        };
        let hamming = 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
        kernel.push(sinc * hamming);
    }
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= sum);
    kernel
}

fn convolve_same_reflect(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    let n = x.len();
    let at = |idx: isize| -> f64 {
        // even reflection at both ends
        let mut i = idx;
        if i < 0 {
            i = -i;
        }
        if i as usize >= n {
            i = 2 * (n as isize - 1) - i;
        }
        x[i.clamp(0, n as isize - 1) as usize]
    };
    (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * at(i + k as isize - half as isize))
                .sum()
        })
        .collect()
}

/// Resamples by the rational factor `up / down`.
///
/// Zero-stuffs by `up`, applies a linear-phase FIR anti-alias lowpass at the
/// tighter of the two Nyquist limits, then keeps every `down`-th sample.
pub fn resample_rational(x: &TimeSeriesMatrix, up: usize, down: usize) -> Result<TimeSeriesMatrix> {
    if up == 0 || down == 0 {
        return Err(Error::InvalidFactor {
            factor: up.min(down),
        });
    }
    if up == down {
        return Ok(x.clone());
    }
    let n = x.n_samples();
    let m = n * up;
    let out_len = m.div_ceil(down);
    let cutoff = 1.0 / up.max(down) as f64;
    let kernel = fir_lowpass_kernel(cutoff, 10 * up.max(down));

    let mut out = ndarray::Array2::zeros((x.n_channels(), out_len));
    for (c, row) in x.data().rows().into_iter().enumerate() {
        let mut upsampled = vec![0.0; m];
        for (i, &v) in row.iter().enumerate() {
            upsampled[i * up] = v * up as f64;
        }
        let filtered = convolve_same_reflect(&upsampled, &kernel);
        for (j, slot) in out.row_mut(c).iter_mut().enumerate() {
            *slot = filtered[j * down];
        }
    }
    TimeSeriesMatrix::new(
        out,
        x.sample_rate_hz() * up as f64 / down as f64,
        Some(x.channel_labels().to_vec()),
    )
}
