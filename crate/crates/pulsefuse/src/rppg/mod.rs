//! Classical pulse extractors over spatial-mean RGB traces.
//!
//! All four methods consume the same [`RgbTrace`] representation and emit a
//! [`SampledSignal`] ready for bandpass + spectral HR estimation. They are
//! pure functions, so callers can fan them out across chunks freely.

mod ica;
mod omit;
mod pos;

pub use ica::ica;
pub use omit::omit;
pub use pos::pos;

use crate::ingest::FrameTensor;
use crate::signal::{zscore, SampledSignal};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RppgError {
    #[error("trace has {len} frames, method needs at least {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("malformed trace: {0}")]
    BadTrace(&'static str),
    #[error("region of interest covers no pixels")]
    EmptyRoi,
    #[error("no pulse component present")]
    NoPulse,
    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    IcaNoConvergence { iterations: usize },
    #[error("channel covariance is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
}

/// Per-frame channel means in [0, 1] at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct RgbTrace {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub rate_hz: f64,
}

impl RgbTrace {
    pub const MIN_LEN: usize = 32;

    pub fn new(r: Vec<f64>, g: Vec<f64>, b: Vec<f64>, rate_hz: f64) -> Result<Self, RppgError> {
        if r.len() != g.len() || g.len() != b.len() {
            return Err(RppgError::BadTrace("channel lengths differ"));
        }
        if r.len() < Self::MIN_LEN {
            return Err(RppgError::SignalTooShort {
                len: r.len(),
                min: Self::MIN_LEN,
            });
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(RppgError::BadTrace("rate must be positive"));
        }
        if [&r, &g, &b]
            .iter()
            .any(|ch| ch.iter().any(|v| !v.is_finite()))
        {
            return Err(RppgError::BadTrace("non-finite sample"));
        }
        Ok(Self { r, g, b, rate_hz })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub(crate) fn channels(&self) -> [&[f64]; 3] {
        [&self.r, &self.g, &self.b]
    }
}

/// Static region of interest in pixel coordinates, applied to every frame.
#[derive(Debug, Clone, Copy)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Per-frame channel means over the ROI (full frame when `None`), in [0, 1].
pub fn spatial_mean_trace(
    frames: &FrameTensor,
    roi: Option<Roi>,
) -> Result<RgbTrace, RppgError> {
    if frames.c != 3 {
        return Err(RppgError::BadTrace("expected 3-channel frames"));
    }
    let (x0, y0, x1, y1) = match roi {
        None => (0, 0, frames.w, frames.h),
        Some(r) => (
            r.x.min(frames.w),
            r.y.min(frames.h),
            (r.x + r.w).min(frames.w),
            (r.y + r.h).min(frames.h),
        ),
    };
    if x1 <= x0 || y1 <= y0 {
        return Err(RppgError::EmptyRoi);
    }
    let npx = ((x1 - x0) * (y1 - y0)) as f64;
    let mut chans = [
        Vec::with_capacity(frames.t),
        Vec::with_capacity(frames.t),
        Vec::with_capacity(frames.t),
    ];
    for fi in 0..frames.t {
        let frame = frames.frame(fi);
        let mut sums = [0.0f64; 3];
        for y in y0..y1 {
            for x in x0..x1 {
                let base = (y * frames.w + x) * 3;
                for c in 0..3 {
                    sums[c] += frame[base + c] as f64;
                }
            }
        }
        for c in 0..3 {
            chans[c].push(sums[c] / (255.0 * npx));
        }
    }
    let [r, g, b] = chans;
    RgbTrace::new(r, g, b, frames.rate_hz())
}

/// Which channel the single-channel method reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenSource {
    Green,
    /// Fingertip video is red-dominant; transmissive setups may prefer this.
    Red,
}

/// Z-scored single-channel trace (the green channel by default).
pub fn green(trace: &RgbTrace) -> Result<SampledSignal, RppgError> {
    green_from(trace, GreenSource::Green)
}

pub fn green_from(trace: &RgbTrace, source: GreenSource) -> Result<SampledSignal, RppgError> {
    let ch = match source {
        GreenSource::Green => &trace.g,
        GreenSource::Red => &trace.r,
    };
    if ch.iter().all(|&v| v == ch[0]) {
        return Err(RppgError::NoPulse);
    }
    let mut samples = ch.clone();
    zscore(&mut samples);
    Ok(SampledSignal {
        samples,
        rate_hz: trace.rate_hz,
        t0_ms: 0,
    })
}

pub(crate) fn output_signal(samples: Vec<f64>, rate_hz: f64) -> SampledSignal {
    SampledSignal {
        samples,
        rate_hz,
        t0_ms: 0,
    }
}

/// (in-band, total) spectral power of one extractor output.
pub(crate) fn band_power_parts(samples: &[f64], rate_hz: f64) -> (f64, f64) {
    use crate::signal::{welch_psd_default, BandLimits};
    let sig = output_signal(samples.to_vec(), rate_hz);
    let psd = match welch_psd_default(&sig) {
        Ok(p) => p,
        Err(_) => return (0.0, 0.0),
    };
    let band = BandLimits::pulse();
    let mut in_band = 0.0;
    let mut total = 0.0;
    for (f, p) in psd.freqs_hz.iter().zip(psd.power.iter()) {
        total += p;
        if band.contains(*f) {
            in_band += p;
        }
    }
    (in_band, total)
}

/// In-band power divided by total power of one extractor output.
pub(crate) fn band_power_fraction(samples: &[f64], rate_hz: f64) -> f64 {
    let (in_band, total) = band_power_parts(samples, rate_hz);
    if total > 0.0 {
        in_band / total
    } else {
        0.0
    }
}

/// Flips the signal if its largest excursion points downward.
pub(crate) fn fix_sign(samples: &mut [f64]) {
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    if -lo > hi {
        for v in samples.iter_mut() {
            *v = -*v;
        }
    }
}

#[cfg(test)]
pub(crate) fn sine_trace(
    n: usize,
    rate_hz: f64,
    freq_hz: f64,
    weights: [f64; 3],
    baseline: [f64; 3],
) -> RgbTrace {
    let wave: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq_hz * i as f64 / rate_hz).sin())
        .collect();
    let ch = |c: usize| -> Vec<f64> {
        wave.iter().map(|&v| baseline[c] + weights[c] * v).collect()
    };
    RgbTrace::new(ch(0), ch(1), ch(2), rate_hz).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{estimate_hr, welch_psd_default, BandLimits};

    #[test]
    fn trace_validation_rejects_bad_shapes() {
        let ok = vec![0.5; 40];
        assert!(matches!(
            RgbTrace::new(ok.clone(), ok.clone(), vec![0.5; 39], 30.0),
            Err(RppgError::BadTrace(_))
        ));
        assert!(matches!(
            RgbTrace::new(vec![0.5; 10], vec![0.5; 10], vec![0.5; 10], 30.0),
            Err(RppgError::SignalTooShort { len: 10, min: 32 })
        ));
        assert!(matches!(
            RgbTrace::new(ok.clone(), ok.clone(), ok.clone(), 0.0),
            Err(RppgError::BadTrace(_))
        ));
        let mut nan = ok.clone();
        nan[3] = f64::NAN;
        assert!(matches!(
            RgbTrace::new(ok.clone(), nan, ok.clone(), 30.0),
            Err(RppgError::BadTrace(_))
        ));
    }

    fn solid_frames(t: usize, rgb: [u8; 3]) -> FrameTensor {
        let (h, w) = (4, 6);
        let mut pixels = Vec::with_capacity(t * h * w * 3);
        for _ in 0..t * h * w {
            pixels.extend_from_slice(&rgb);
        }
        let ts = (0..t as i64).map(|i| i * 33).collect();
        FrameTensor::new(t, h, w, 3, pixels, ts).unwrap()
    }

    #[test]
    fn solid_color_gives_constant_trace() {
        let frames = solid_frames(40, [10, 20, 30]);
        let tr = spatial_mean_trace(&frames, None).unwrap();
        assert!(tr.r.iter().all(|&v| v == 10.0 / 255.0));
        assert!(tr.g.iter().all(|&v| v == 20.0 / 255.0));
        assert!(tr.b.iter().all(|&v| v == 30.0 / 255.0));
    }

    #[test]
    fn half_black_half_white_averages_to_half() {
        let (t, h, w) = (40, 4, 6);
        let mut pixels = vec![0u8; t * h * w * 3];
        for fi in 0..t {
            for y in 0..h {
                for x in 0..w / 2 {
                    let base = fi * h * w * 3 + (y * w + x) * 3;
                    pixels[base..base + 3].fill(255);
                }
            }
        }
        let ts = (0..t as i64).map(|i| i * 33).collect();
        let frames = FrameTensor::new(t, h, w, 3, pixels, ts).unwrap();
        let tr = spatial_mean_trace(&frames, None).unwrap();
        assert!(tr.r.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(tr.b.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn roi_outside_frame_is_empty() {
        let frames = solid_frames(40, [1, 2, 3]);
        let err = spatial_mean_trace(
            &frames,
            Some(Roi {
                x: 50,
                y: 0,
                w: 4,
                h: 4,
            }),
        )
        .unwrap_err();
        assert_eq!(err, RppgError::EmptyRoi);
        let err = spatial_mean_trace(
            &frames,
            Some(Roi {
                x: 0,
                y: 0,
                w: 0,
                h: 4,
            }),
        )
        .unwrap_err();
        assert_eq!(err, RppgError::EmptyRoi);
    }

    #[test]
    fn roi_restricts_the_mean() {
        let (t, h, w) = (40, 4, 6);
        // Left half bright, right half dark; ROI on the left half only.
        let mut pixels = vec![0u8; t * h * w * 3];
        for fi in 0..t {
            for y in 0..h {
                for x in 0..3 {
                    let base = fi * h * w * 3 + (y * w + x) * 3;
                    pixels[base..base + 3].fill(200);
                }
            }
        }
        let ts = (0..t as i64).map(|i| i * 33).collect();
        let frames = FrameTensor::new(t, h, w, 3, pixels, ts).unwrap();
        let tr = spatial_mean_trace(
            &frames,
            Some(Roi {
                x: 0,
                y: 0,
                w: 3,
                h: 4,
            }),
        )
        .unwrap();
        assert!(tr.g.iter().all(|&v| v == 200.0 / 255.0));
    }

    #[test]
    fn green_zscores_the_channel() {
        let tr = sine_trace(128, 30.0, 1.2, [0.0, 0.05, 0.0], [0.4, 0.5, 0.4]);
        let out = green(&tr).unwrap();
        let mut expect = tr.g.clone();
        zscore(&mut expect);
        assert_eq!(out.samples, expect);
        assert_eq!(out.rate_hz, 30.0);
    }

    #[test]
    fn green_on_constant_is_no_pulse() {
        let tr = RgbTrace::new(vec![0.3; 64], vec![0.5; 64], vec![0.2; 64], 30.0).unwrap();
        assert_eq!(green(&tr).unwrap_err(), RppgError::NoPulse);
    }

    #[test]
    fn red_substitution_reads_the_red_channel() {
        let tr = sine_trace(128, 30.0, 1.2, [0.05, 0.0, 0.0], [0.5, 0.4, 0.3]);
        assert_eq!(green(&tr).unwrap_err(), RppgError::NoPulse);
        let out = green_from(&tr, GreenSource::Red).unwrap();
        let psd = welch_psd_default(&out).unwrap();
        let hr = estimate_hr(&psd, BandLimits::pulse()).unwrap();
        assert!((hr - 72.0).abs() < 2.0, "hr {hr}");
    }

    #[test]
    fn all_four_recover_synthetic_heart_rate() {
        use crate::signal::bandpass;
        use crate::synth::{gen_dual_view, SynthConfig};
        let mut cfg = SynthConfig::new(72.0, 12.0, 5);
        cfg.width = 16;
        cfg.height = 16;
        cfg.noise_sd = 0.01;
        let dir = tempfile::tempdir().unwrap();
        let (face, _, _) = gen_dual_view(&cfg, &[], &[], dir.path(), "s1", "a").unwrap();
        let tr = spatial_mean_trace(&face, None).unwrap();
        for (name, out) in [
            ("green", green(&tr).unwrap()),
            ("pos", pos(&tr).unwrap()),
            ("ica", ica(&tr).unwrap()),
            ("omit", omit(&tr).unwrap()),
        ] {
            let filtered = bandpass(&out, BandLimits::pulse()).unwrap();
            let psd = welch_psd_default(&filtered).unwrap();
            let hr = estimate_hr(&psd, BandLimits::pulse()).unwrap();
            assert!((hr - 72.0).abs() < 2.0, "{name} hr {hr}");
        }
    }

    #[test]
    fn sign_fix_makes_peak_positive() {
        let mut s: Vec<f64> = (0..64)
            .map(|i| -(2.0 * std::f64::consts::PI * i as f64 / 16.0).sin())
            .collect();
        s[20] = -3.0;
        fix_sign(&mut s);
        assert_eq!(s[20], 3.0);
    }
}
