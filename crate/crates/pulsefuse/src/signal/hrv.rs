//! Heart-rate-variability descriptors from detected peaks.

use super::SignalError;

/// Time-domain and Poincare HRV descriptors over NN intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct HrvReport {
    pub n_intervals: usize,
    /// Population standard deviation of the NN intervals.
    pub sdnn_ms: f64,
    /// Root mean square of successive interval differences. Computed about
    /// zero rather than about the difference mean: successive differences
    /// telescope, so their mean is (last - first) / n and vanishes for
    /// stationary series, and the zero-centered form keeps the Poincare
    /// identities exact.
    pub sdsd_ms: f64,
    /// Poincare short-axis spread, `sqrt(1/2) * SDSD`.
    pub sd1_ms: f64,
    /// Poincare long-axis spread, `sqrt(2*SDNN^2 - SDSD^2/2)`, clamped at
    /// zero when the radicand dips negative.
    pub sd2_ms: f64,
    /// Poincare plot area, `pi * SD1 * SD2`.
    pub ppa_ms2: f64,
    /// True when the SD2 radicand was negative and got clamped; the
    /// `SD1^2 + SD2^2 = 2*SDNN^2` identity does not hold in that case.
    pub sd2_clamped: bool,
}

/// Minimum number of peaks: four peaks give three intervals and two
/// successive differences, the least that makes every descriptor defined.
pub const MIN_PEAKS: usize = 4;

/// HRV descriptors from peak sample indices at `rate_hz`.
///
/// Peak indices must be strictly increasing.
pub fn hrv_metrics(peaks: &[usize], rate_hz: f64) -> Result<HrvReport, SignalError> {
    if peaks.len() < MIN_PEAKS {
        return Err(SignalError::TooFewPeaks { n: peaks.len(), min: MIN_PEAKS });
    }
    if !(rate_hz > 0.0) {
        return Err(SignalError::DegenerateInput("rate must be positive"));
    }
    if peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SignalError::DegenerateInput("peak indices must be strictly increasing"));
    }

    let nn_ms: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * 1000.0 / rate_hz)
        .collect();
    let n = nn_ms.len() as f64;
    let mean = nn_ms.iter().sum::<f64>() / n;
    let sdnn = (nn_ms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();

    let diffs: Vec<f64> = nn_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let sdsd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();

    let sd1 = (0.5 * sdsd * sdsd).sqrt();
    let radicand = 2.0 * sdnn * sdnn - 0.5 * sdsd * sdsd;
    let sd2_clamped = radicand < 0.0;
    let sd2 = radicand.max(0.0).sqrt();
    let ppa = std::f64::consts::PI * sd1 * sd2;

    Ok(HrvReport {
        n_intervals: nn_ms.len(),
        sdnn_ms: sdnn,
        sdsd_ms: sdsd,
        sd1_ms: sd1,
        sd2_ms: sd2,
        ppa_ms2: ppa,
        sd2_clamped,
    })
}
