//! Signal-processing core shared by every pipeline stage: band-pass
//! filtering, Welch spectra, heart-rate estimation, peak picking, HRV
//! descriptors, agreement metrics, and resampling.
//!
//! All series are double precision. Pulse-band defaults follow the usual
//! 0.5–3.0 Hz (30–180 BPM) convention.

mod filter;
mod hrv;
mod metrics;
mod peaks;
mod resample;
mod spectral;

pub use filter::bandpass;
pub use hrv::{hrv_metrics, HrvReport};
pub use metrics::{bland_altman, hr_metrics, pearson, BlandAltman, MetricsReport};
pub use peaks::detect_peaks;
pub use resample::resample_linear;
pub use spectral::{estimate_hr, welch_psd, welch_psd_default, Spectrum};

/// A uniformly sampled real-valued series with an absolute start time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    pub rate_hz: f64,
    /// Timestamp of `samples[0]` in epoch milliseconds.
    pub t0_ms: i64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, rate_hz: f64, t0_ms: i64) -> Self {
        Self { samples, rate_hz, t0_ms }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span from the first to the last sample, in seconds.
    pub fn duration_s(&self) -> f64 {
        if self.samples.len() < 2 {
            0.0
        } else {
            (self.samples.len() - 1) as f64 / self.rate_hz
        }
    }

    /// Timestamp of sample `i` in epoch milliseconds (rounded to nearest).
    pub fn sample_time_ms(&self, i: usize) -> i64 {
        self.t0_ms + (i as f64 * 1000.0 / self.rate_hz).round() as i64
    }
}

/// A frequency band in Hz, `lo_hz < hi_hz`, both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandLimits {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandLimits {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Self {
        Self { lo_hz, hi_hz }
    }

    /// The pulse band used throughout: 0.5–3.0 Hz, i.e. 30–180 BPM.
    pub fn pulse() -> Self {
        Self { lo_hz: 0.5, hi_hz: 3.0 }
    }

    pub fn contains(&self, f_hz: f64) -> bool {
        f_hz >= self.lo_hz && f_hz <= self.hi_hz
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("invalid band {lo_hz}..{hi_hz} Hz at rate {rate_hz} Hz")]
    InvalidBand { lo_hz: f64, hi_hz: f64, rate_hz: f64 },
    #[error("no pulse: in-band power below detection floor")]
    NoPulse,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("too few peaks: found {n}, need at least {min}")]
    TooFewPeaks { n: usize, min: usize },
}

/// z-score a slice in place: subtract the mean, divide by the population
/// standard deviation. A constant slice is left at zero after centering.
pub fn zscore(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    // An exactly constant slice must come out exactly zero; going through the
    // mean would leave rounding residue that the sd division then amplifies.
    if x.iter().all(|&v| v == x[0]) {
        x.fill(0.0);
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    for v in x.iter_mut() {
        *v -= mean;
    }
    let sd = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        for v in x.iter_mut() {
            *v /= sd;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_contains_is_inclusive() {
        let b = BandLimits::pulse();
        assert!(b.contains(0.5));
        assert!(b.contains(3.0));
        assert!(!b.contains(0.499));
        assert!(!b.contains(3.001));
    }

    #[test]
    fn zscore_centers_and_scales() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        zscore(&mut x);
        let mean: f64 = x.iter().sum::<f64>() / 4.0;
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zscore_constant_goes_to_zero() {
        let mut x = vec![7.0; 10];
        zscore(&mut x);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sample_times_advance_at_rate() {
        let s = SampledSignal::new(vec![0.0; 4], 20.0, 1_000);
        assert_eq!(s.sample_time_ms(0), 1_000);
        assert_eq!(s.sample_time_ms(2), 1_100);
        assert_eq!(s.duration_s(), 0.15);
    }
}
