//! Zero-phase Butterworth band-pass filtering.
//!
//! The filter is designed from an order-2 analog Butterworth prototype,
//! transformed low-pass to band-pass and discretized with the bilinear
//! transform, yielding two second-order sections. `bandpass` then applies
//! the cascade forward and backward over an odd-reflected extension with
//! per-section step-response initial conditions, so the output has zero
//! phase lag and suppressed edge transients.

use super::{BandLimits, SampledSignal, SignalError};
use rustfft::num_complex::Complex64;

/// Minimum input length accepted by [`bandpass`].
pub const MIN_FILTER_LEN: usize = 16;

/// One direct-form-II-transposed biquad: y-coefficients `b`, x-coefficients
/// `1, a1, a2`.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Steady-state internal state for a unit-step input. Scaling this by
    /// the first input sample removes the start-up transient for signals
    /// that begin near that level.
    fn step_zi(&self) -> [f64; 2] {
        let k = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * k;
        let z1 = self.b[1] - self.a[0] * k + z2;
        [z1, z2]
    }

    /// DC gain of the section.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &[f64], zi: [f64; 2], out: &mut Vec<f64>) {
        out.clear();
        let (mut z1, mut z2) = (zi[0], zi[1]);
        for &xi in x {
            let y = self.b[0] * xi + z1;
            z1 = self.b[1] * xi - self.a[0] * y + z2;
            z2 = self.b[2] * xi - self.a[1] * y;
            out.push(y);
        }
    }
}

/// Design the two band-pass sections for `band` at `rate_hz`.
///
/// Pole pairs are matched with the nearest zero pair (z = +1 or z = -1),
/// highest-Q pair first, and the section containing the poles closest to
/// the unit circle runs last; the overall gain sits on the first section.
fn design_bandpass(band: BandLimits, rate_hz: f64) -> [Biquad; 2] {
    let fs2 = 2.0 * rate_hz;
    // Pre-warp the edges so the digital filter hits them exactly.
    let w1 = fs2 * (std::f64::consts::PI * band.lo_hz / rate_hz).tan();
    let w2 = fs2 * (std::f64::consts::PI * band.hi_hz / rate_hz).tan();
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    // Order-2 Butterworth prototype pole (upper half-plane); its conjugate
    // is implied throughout.
    let proto = Complex64::from_polar(1.0, 3.0 * std::f64::consts::PI / 4.0);

    // Low-pass to band-pass: s_lp -> (s^2 + w0^2) / (bw * s). Each prototype
    // pole spawns two analog poles; keeping the two upper-half-plane
    // representatives is enough because coefficients stay real.
    let pb = proto * bw;
    let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
    let s_poles = [(pb + disc) * 0.5, (pb - disc) * 0.5];

    // Bilinear transform into z; zeros land at +1 (from s = 0) and -1
    // (from s = infinity), one conjugate pair each.
    let z_poles = [
        (fs2 + s_poles[0]) / (fs2 - s_poles[0]),
        (fs2 + s_poles[1]) / (fs2 - s_poles[1]),
    ];

    // Unit gain at the digital center frequency, where the analog response
    // is exactly one.
    let om0 = 2.0 * (w0 / fs2).atan();
    let ej = Complex64::from_polar(1.0, om0);
    let num = (ej - 1.0) * (ej - 1.0) * (ej + 1.0) * (ej + 1.0);
    let den: Complex64 = z_poles
        .iter()
        .map(|p| (ej - p) * (ej - p.conj()))
        .product();
    let gain = 1.0 / (num / den).norm();

    // Assign zero pairs: the pole pair closest to the unit circle takes the
    // nearer zero, the other pair takes what is left.
    let (hi_q, lo_q) = if z_poles[0].norm() >= z_poles[1].norm() {
        (z_poles[0], z_poles[1])
    } else {
        (z_poles[1], z_poles[0])
    };
    let hi_zero: f64 = if (hi_q - 1.0).norm() <= (hi_q + 1.0).norm() { 1.0 } else { -1.0 };
    let lo_zero = -hi_zero;

    let quad = |p: Complex64, zero: f64, g: f64| Biquad {
        b: [g, -2.0 * zero * g, g],
        a: [-2.0 * p.re, p.norm_sqr()],
    };
    // First section: lower-Q poles plus the full gain; last section: the
    // near-unit-circle poles.
    [quad(lo_q, lo_zero, gain), quad(hi_q, hi_zero, 1.0)]
}

/// Zero-phase band-pass filter.
///
/// Requires at least [`MIN_FILTER_LEN`] samples and a band strictly inside
/// (0, Nyquist). The output has the same length, rate and start time as the
/// input.
pub fn bandpass(sig: &SampledSignal, band: BandLimits) -> Result<SampledSignal, SignalError> {
    let n = sig.samples.len();
    if n < MIN_FILTER_LEN {
        return Err(SignalError::SignalTooShort { len: n, min: MIN_FILTER_LEN });
    }
    let nyquist = sig.rate_hz / 2.0;
    if !(band.lo_hz > 0.0 && band.lo_hz < band.hi_hz && band.hi_hz < nyquist) {
        return Err(SignalError::InvalidBand {
            lo_hz: band.lo_hz,
            hi_hz: band.hi_hz,
            rate_hz: sig.rate_hz,
        });
    }

    let sections = design_bandpass(band, sig.rate_hz);

    // Odd reflection on both ends keeps the signal level and slope roughly
    // continuous, which the step-response initial conditions then absorb.
    let pad = (3 * (4 * sections.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * sig.samples[0] - sig.samples[i]);
    }
    ext.extend_from_slice(&sig.samples);
    for i in (n - 1 - pad..n - 1).rev() {
        ext.push(2.0 * sig.samples[n - 1] - sig.samples[i]);
    }

    let run_cascade = |x: &mut Vec<f64>, scratch: &mut Vec<f64>| {
        // Each section's initial state is its own step response scaled by
        // the cascade's level entering it.
        let mut level = x[0];
        for s in &sections {
            let zi = s.step_zi();
            s.run(x, [zi[0] * level, zi[1] * level], scratch);
            level *= s.dc_gain();
            std::mem::swap(x, scratch);
        }
    };

    let mut buf = ext;
    let mut scratch = Vec::new();
    run_cascade(&mut buf, &mut scratch);
    buf.reverse();
    run_cascade(&mut buf, &mut scratch);
    buf.reverse();

    let samples = buf[pad..pad + n].to_vec();
    Ok(SampledSignal::new(samples, sig.rate_hz, sig.t0_ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tone(f: f64, rate: f64, n: usize) -> SampledSignal {
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin())
            .collect();
        SampledSignal::new(samples, rate, 0)
    }

    // Expected coefficients computed with scipy.signal.butter(2, [0.5, 3.0],
    // btype='bandpass', fs=30, output='sos').
    #[test]
    fn design_matches_reference_coefficients() {
        let sos = design_bandpass(BandLimits::pulse(), 30.0);
        let expect = [
            [
                4.94899562686770544e-2,
                9.89799125373541089e-2,
                4.94899562686770544e-2,
                -1.30424492864679253e0,
                5.43658536787800961e-1,
            ],
            [1.0, -2.0, 1.0, -1.86556434112545544e0, 8.78478342112246735e-1],
        ];
        for (s, e) in sos.iter().zip(expect.iter()) {
            assert_relative_eq!(s.b[0], e[0], max_relative = 1e-9);
            assert_relative_eq!(s.b[1], e[1], max_relative = 1e-9);
            assert_relative_eq!(s.b[2], e[2], max_relative = 1e-9);
            assert_relative_eq!(s.a[0], e[3], max_relative = 1e-9);
            assert_relative_eq!(s.a[1], e[4], max_relative = 1e-9);
        }
    }

    #[test]
    fn in_band_tone_keeps_amplitude() {
        let sig = tone(1.5, 30.0, 600);
        let out = bandpass(&sig, BandLimits::pulse()).unwrap();
        let interior = &out.samples[100..500];
        let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.05, "peak {peak}");
    }

    #[test]
    fn dc_is_rejected() {
        let sig = SampledSignal::new(vec![5.0; 600], 30.0, 0);
        let out = bandpass(&sig, BandLimits::pulse()).unwrap();
        let peak = out.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-6 * 5.0, "peak {peak}");
    }

    #[test]
    fn out_of_band_tone_is_attenuated() {
        let sig = tone(6.0, 30.0, 600);
        let out = bandpass(&sig, BandLimits::pulse()).unwrap();
        let interior = &out.samples[100..500];
        let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 0.05, "peak {peak}");
    }

    #[test]
    fn zero_phase_no_lag() {
        // Cross-correlate input and output; the lag at the maximum must be 0.
        let sig = tone(1.2, 30.0, 600);
        let out = bandpass(&sig, BandLimits::pulse()).unwrap();
        let mut best = (0i64, f64::MIN);
        for lag in -5i64..=5 {
            let mut acc = 0.0;
            for i in 100..500usize {
                let j = i as i64 + lag;
                acc += sig.samples[i] * out.samples[j as usize];
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 0);
    }

    #[test]
    fn linearity() {
        let a = tone(1.0, 30.0, 300);
        let b = tone(2.0, 30.0, 300);
        let sum = SampledSignal::new(
            a.samples.iter().zip(&b.samples).map(|(x, y)| 2.0 * x + 3.0 * y).collect(),
            30.0,
            0,
        );
        let fa = bandpass(&a, BandLimits::pulse()).unwrap();
        let fb = bandpass(&b, BandLimits::pulse()).unwrap();
        let fsum = bandpass(&sum, BandLimits::pulse()).unwrap();
        for i in 0..300 {
            assert_relative_eq!(
                fsum.samples[i],
                2.0 * fa.samples[i] + 3.0 * fb.samples[i],
                epsilon = 1e-9,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn rejects_short_input() {
        let sig = SampledSignal::new(vec![0.0; 15], 30.0, 0);
        assert!(matches!(
            bandpass(&sig, BandLimits::pulse()),
            Err(SignalError::SignalTooShort { .. })
        ));
    }

    #[test]
    fn rejects_bad_band() {
        let sig = tone(1.0, 30.0, 100);
        for band in [
            BandLimits::new(0.0, 3.0),
            BandLimits::new(3.0, 0.5),
            BandLimits::new(0.5, 15.0),
            BandLimits::new(0.5, 16.0),
        ] {
            assert!(matches!(bandpass(&sig, band), Err(SignalError::InvalidBand { .. })));
        }
    }

    #[test]
    fn step_zi_reaches_steady_state_immediately() {
        let sos = design_bandpass(BandLimits::pulse(), 30.0);
        let s = sos[0];
        let zi = s.step_zi();
        let c = 3.7;
        let mut out = Vec::new();
        s.run(&[c; 50], [zi[0] * c, zi[1] * c], &mut out);
        let k = s.dc_gain() * c;
        for y in out {
            assert_relative_eq!(y, k, epsilon = 1e-12);
        }
    }
}
