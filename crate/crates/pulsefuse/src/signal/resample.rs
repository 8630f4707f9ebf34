//! Linear-interpolation resampling.

use super::{SampledSignal, SignalError};

/// Resample `sig` onto a uniform grid at `new_rate_hz` spanning the same
/// time range, by linear interpolation between neighbouring samples.
///
/// The first output sample coincides with the input start; positions beyond
/// the last input sample clamp to it. Needs at least two input samples.
pub fn resample_linear(sig: &SampledSignal, new_rate_hz: f64) -> Result<SampledSignal, SignalError> {
    let n = sig.samples.len();
    if n == 0 {
        return Err(SignalError::EmptyInput);
    }
    if n < 2 {
        return Err(SignalError::SignalTooShort { len: n, min: 2 });
    }
    if !(new_rate_hz > 0.0) || !(sig.rate_hz > 0.0) {
        return Err(SignalError::DegenerateInput("rates must be positive"));
    }

    let duration = (n - 1) as f64 / sig.rate_hz;
    // Tiny slack so an exactly representable endpoint is not lost to
    // floating-point truncation.
    let n_out = (duration * new_rate_hz + 1e-9).floor() as usize + 1;
    let ratio = sig.rate_hz / new_rate_hz;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let p = i as f64 * ratio;
        let lo = (p.floor() as usize).min(n - 2);
        let frac = (p - lo as f64).clamp(0.0, 1.0);
        out.push(sig.samples[lo] * (1.0 - frac) + sig.samples[lo + 1] * frac);
    }
    Ok(SampledSignal::new(out, new_rate_hz, sig.t0_ms))
}
