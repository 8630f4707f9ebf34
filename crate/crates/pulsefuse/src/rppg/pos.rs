//! Plane-orthogonal-to-skin pulse extraction.

use super::{output_signal, RgbTrace, RppgError};
use crate::signal::{zscore, SampledSignal};

const WINDOW_S: f64 = 1.6;

/// Sliding-window projection onto the plane orthogonal to the skin tone.
///
/// Per window of `round(1.6 * rate)` frames (stride 1): channels are
/// normalized by their window mean, projected through rows [0, 1, -1] and
/// [-2, 1, 1], alpha-combined, mean-subtracted, and overlap-added. The mean
/// normalization is computed as `c * L / sum(c)`, so a global gain applied to
/// all channels cancels exactly rather than to rounding error.
pub fn pos(trace: &RgbTrace) -> Result<SampledSignal, RppgError> {
    let n = trace.len();
    let window = (WINDOW_S * trace.rate_hz).round() as usize;
    if window < 2 || n < window {
        return Err(RppgError::SignalTooShort {
            len: n,
            min: window.max(2),
        });
    }
    let l = window as f64;
    let mut out = vec![0.0f64; n];
    let mut cn = [vec![0.0f64; window], vec![0.0; window], vec![0.0; window]];
    let mut s1 = vec![0.0f64; window];
    let mut s2 = vec![0.0f64; window];
    for start in 0..=n - window {
        for (ci, ch) in trace.channels().iter().enumerate() {
            let seg = &ch[start..start + window];
            let sum: f64 = seg.iter().sum();
            if sum == 0.0 {
                return Err(RppgError::NoPulse);
            }
            for (dst, &v) in cn[ci].iter_mut().zip(seg.iter()) {
                *dst = v * l / sum;
            }
        }
        for i in 0..window {
            s1[i] = cn[1][i] - cn[2][i];
            s2[i] = -2.0 * cn[0][i] + cn[1][i] + cn[2][i];
        }
        let sd = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / l;
            (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / l).sqrt()
        };
        let sd2 = sd(&s2);
        let alpha = if sd2 == 0.0 { 0.0 } else { sd(&s1) / sd2 };
        let mut hsum = 0.0;
        for i in 0..window {
            hsum += s1[i] + alpha * s2[i];
        }
        let hmean = hsum / l;
        for i in 0..window {
            out[start + i] += s1[i] + alpha * s2[i] - hmean;
        }
    }
    zscore(&mut out);
    Ok(output_signal(out, trace.rate_hz))
}

#[cfg(test)]
mod tests {
    use super::super::sine_trace;
    use super::*;
    use crate::signal::{estimate_hr, welch_psd_default, BandLimits};

    // Values on a dyadic grid keep sums and gain products exact, which the
    // gain-invariance assertions below rely on.
    fn dyadic_trace(n: usize) -> RgbTrace {
        let q = (1u64 << 16) as f64;
        let quant = |v: f64| (v * q).round() / q;
        let ch = |w: f64, b: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let t = i as f64 / 30.0;
                    let s = (2.0 * std::f64::consts::PI * 1.2 * t).sin();
                    let wag = 0.01 * (2.0 * std::f64::consts::PI * 0.3 * t).sin();
                    quant(b + w * s + wag)
                })
                .collect()
        };
        RgbTrace::new(ch(0.015, 0.40), ch(0.05, 0.50), ch(0.025, 0.35), 30.0).unwrap()
    }

    #[test]
    fn recovers_sine_pulse_rate() {
        let tr = sine_trace(300, 30.0, 1.2, [0.015, 0.05, 0.025], [0.42, 0.50, 0.38]);
        let out = pos(&tr).unwrap();
        let psd = welch_psd_default(&out).unwrap();
        let hr = estimate_hr(&psd, BandLimits::pulse()).unwrap();
        assert!((hr - 72.0).abs() < 1.0, "hr {hr}");
    }

    #[test]
    fn gain_of_ten_is_bit_identical() {
        let tr = dyadic_trace(240);
        let scaled = RgbTrace::new(
            tr.r.iter().map(|v| v * 10.0).collect(),
            tr.g.iter().map(|v| v * 10.0).collect(),
            tr.b.iter().map(|v| v * 10.0).collect(),
            tr.rate_hz,
        )
        .unwrap();
        let a = pos(&tr).unwrap();
        let b = pos(&scaled).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn arbitrary_gain_matches_within_rounding() {
        let tr = sine_trace(240, 30.0, 1.1, [0.02, 0.05, 0.03], [0.42, 0.50, 0.38]);
        let scaled = RgbTrace::new(
            tr.r.iter().map(|v| v * 3.7).collect(),
            tr.g.iter().map(|v| v * 3.7).collect(),
            tr.b.iter().map(|v| v * 3.7).collect(),
            tr.rate_hz,
        )
        .unwrap();
        let a = pos(&tr).unwrap();
        let b = pos(&scaled).unwrap();
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn constant_trace_projects_to_zero() {
        // Dyadic constants make every window sum exact, so the normalized
        // channels are exactly 1 and the projection is exactly zero.
        let tr =
            RgbTrace::new(vec![0.25; 120], vec![0.5; 120], vec![0.125; 120], 30.0).unwrap();
        let out = pos(&tr).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_mean_window_is_no_pulse() {
        let mut g = vec![0.5; 120];
        for v in g.iter_mut().take(48) {
            *v = 0.0;
        }
        let tr = RgbTrace::new(vec![0.4; 120], g, vec![0.3; 120], 30.0).unwrap();
        assert_eq!(pos(&tr).unwrap_err(), RppgError::NoPulse);
    }

    #[test]
    fn short_trace_is_rejected() {
        let tr = RgbTrace::new(vec![0.4; 40], vec![0.5; 40], vec![0.3; 40], 30.0).unwrap();
        let err = pos(&tr).unwrap_err();
        assert_eq!(
            err,
            RppgError::SignalTooShort { len: 40, min: 48 }
        );
    }
}
