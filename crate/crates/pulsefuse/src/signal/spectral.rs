//! Welch power spectral density and spectral heart-rate estimation.

use super::{BandLimits, SampledSignal, SignalError};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One-sided power spectral density in (signal units)^2 per Hz.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Frequency resolution between adjacent bins.
    pub fn df_hz(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            0.0
        } else {
            self.freqs_hz[1] - self.freqs_hz[0]
        }
    }
}

/// Welch PSD estimate.
///
/// Segments of `seg_len` samples advance by `seg_len * (1 - overlap_frac)`,
/// are mean-subtracted, windowed with a periodic Hamming window, zero-padded
/// to `nfft`, and their periodograms averaged. Scaling is one-sided density:
/// `|X_k|^2 / (rate * sum(w^2))`, doubled at interior bins, so that the
/// integral of the PSD over frequency approximates the signal variance.
pub fn welch_psd(
    sig: &SampledSignal,
    seg_len: usize,
    overlap_frac: f64,
    nfft: usize,
) -> Result<Spectrum, SignalError> {
    let n = sig.samples.len();
    if n == 0 {
        return Err(SignalError::EmptyInput);
    }
    if seg_len < 4 {
        return Err(SignalError::DegenerateInput("seg_len must be at least 4"));
    }
    if n < seg_len {
        return Err(SignalError::SignalTooShort { len: n, min: seg_len });
    }
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(SignalError::DegenerateInput("overlap_frac must be in [0, 1)"));
    }
    if nfft < seg_len {
        return Err(SignalError::DegenerateInput("nfft must be >= seg_len"));
    }
    if !(sig.rate_hz > 0.0) {
        return Err(SignalError::DegenerateInput("rate must be positive"));
    }

    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / seg_len as f64).cos())
        .collect();
    let win_energy: f64 = window.iter().map(|w| w * w).sum();

    let hop = (seg_len as f64 * (1.0 - overlap_frac)).floor().max(1.0) as usize;
    let mut fft_planner = FftPlanner::new();
    let fft = fft_planner.plan_fft_forward(nfft);

    let half = nfft / 2;
    let mut acc = vec![0.0f64; half + 1];
    let mut n_segs = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];

    let mut start = 0usize;
    while start + seg_len <= n {
        let seg = &sig.samples[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < seg_len {
                Complex64::new((seg[i] - mean) * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot += buf[k].norm_sqr();
        }
        n_segs += 1;
        start += hop;
    }

    let scale = 1.0 / (sig.rate_hz * win_energy * n_segs as f64);
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (nfft % 2 == 0 && k == half) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let freqs_hz = (0..=half).map(|k| k as f64 * sig.rate_hz / nfft as f64).collect();
    Ok(Spectrum { freqs_hz, power })
}

/// [`welch_psd`] with the defaults used across the crate: segment length
/// `min(len, 256)`, 50% overlap, 4096-point FFT.
pub fn welch_psd_default(sig: &SampledSignal) -> Result<Spectrum, SignalError> {
    let seg = sig.samples.len().min(256);
    welch_psd(sig, seg, 0.5, 4096)
}

/// Power ratio below which a band is considered pulse-free.
pub const NO_PULSE_FLOOR: f64 = 1e-12;

/// Heart rate in BPM from the highest in-band spectral bin.
///
/// Requires at least 3 bins inside `band`. Ties resolve to the lowest
/// frequency. Returns `NoPulse` when the in-band power is below
/// [`NO_PULSE_FLOOR`] of the total power.
pub fn estimate_hr(spectrum: &Spectrum, band: BandLimits) -> Result<f64, SignalError> {
    if !(band.lo_hz > 0.0 && band.lo_hz < band.hi_hz) {
        return Err(SignalError::InvalidBand {
            lo_hz: band.lo_hz,
            hi_hz: band.hi_hz,
            rate_hz: f64::NAN,
        });
    }
    let in_band: Vec<usize> = (0..spectrum.freqs_hz.len())
        .filter(|&k| band.contains(spectrum.freqs_hz[k]))
        .collect();
    if in_band.len() < 3 {
        return Err(SignalError::InvalidBand {
            lo_hz: band.lo_hz,
            hi_hz: band.hi_hz,
            rate_hz: f64::NAN,
        });
    }
    let total: f64 = spectrum.power.iter().sum();
    let band_power: f64 = in_band.iter().map(|&k| spectrum.power[k]).sum();
    if !(total > 0.0) || band_power < NO_PULSE_FLOOR * total {
        return Err(SignalError::NoPulse);
    }
    let mut best = in_band[0];
    for &k in &in_band[1..] {
        if spectrum.power[k] > spectrum.power[best] {
            best = k;
        }
    }
    Ok(60.0 * spectrum.freqs_hz[best])
}
