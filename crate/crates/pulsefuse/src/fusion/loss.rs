//! Waveform and spectral training losses.
//!
//! The spectral losses share one differentiable periodogram: the n-sample
//! prediction is zero-padded to 512 points, and only the in-band DFT bins are
//! materialized, as constant cosine/sine projection matrices applied to the
//! mean-centered signal.

use super::FusionError;
use crate::nn::{Tensor, TensorError};
use crate::signal::BandLimits;

pub const NFFT: usize = 512;
/// Additive floor applied to both spectra before normalizing for the KL term.
pub const PSD_FLOOR: f64 = 1e-8;
/// Keeps the cross-entropy logits finite when a bin has exactly zero power.
const CE_EPS: f64 = 1e-12;
/// Keeps the correlation denominator nonzero for constant predictions.
const NP_GUARD: f64 = 1e-24;

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub np: f64,
    pub ce: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { np: 0.2, ce: 1.0, kl: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), FusionError> {
        for (name, w) in [("np", self.np), ("ce", self.ce), ("kl", self.kl)] {
            if !w.is_finite() || w < 0.0 {
                return Err(FusionError::InvalidConfig(format!(
                    "loss weight {name} = {w} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

fn all_equal(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn check_pair(pred: &Tensor, label: &[f64]) -> Result<usize, FusionError> {
    let s = pred.shape();
    if s.len() != 1 || s[0] != label.len() || label.len() < 2 {
        return Err(FusionError::Tensor(TensorError::ShapeMismatch {
            op: "loss",
            detail: format!("pred {s:?} against {} label samples", label.len()),
        }));
    }
    Ok(label.len())
}

/// Subtracting the mean through the graph; an exactly constant input keeps a
/// rounding residue here, so constancy must be screened before this point.
fn centered(x: &Tensor) -> Result<Tensor, TensorError> {
    x.sub(&x.mean()?)
}

/// Negative Pearson correlation between prediction and label.
pub fn np_loss(pred: &Tensor, label: &[f64]) -> Result<Tensor, FusionError> {
    let n = check_pair(pred, label)?;
    if all_equal(label) {
        return Err(FusionError::DegenerateInput);
    }
    let lt = Tensor::constant(vec![n], label.to_vec())?;
    let a = centered(pred)?;
    let b = centered(&lt)?;
    let num = a.mul(&b)?.sum()?;
    let da = a.mul(&a)?.sum()?;
    let db = b.mul(&b)?.sum()?;
    let denom = da.mul(&db)?.add_scalar(NP_GUARD)?.sqrt()?;
    Ok(num.div(&denom)?.neg()?)
}

/// Inclusive DFT bin range covering `band` for an NFFT-point transform.
pub(crate) fn band_bins(rate_hz: f64, band: BandLimits) -> Result<(usize, usize), FusionError> {
    if !(rate_hz > 0.0) {
        return Err(FusionError::InvalidConfig(format!("rate {rate_hz} Hz")));
    }
    let k_lo = (band.lo_hz * NFFT as f64 / rate_hz).ceil() as usize;
    let k_hi = ((band.hi_hz * NFFT as f64 / rate_hz).floor() as usize).min(NFFT / 2);
    if k_lo == 0 || k_lo > k_hi {
        return Err(FusionError::InvalidConfig(format!(
            "band {}..{} Hz maps to no usable bins at {rate_hz} Hz",
            band.lo_hz, band.hi_hz
        )));
    }
    Ok((k_lo, k_hi))
}

/// Constant projection matrices (bins x samples) onto the in-band DFT rows.
fn dft_mats(n: usize, k_lo: usize, k_hi: usize) -> Result<(Tensor, Tensor), TensorError> {
    let bins = k_hi - k_lo + 1;
    let mut cos_v = Vec::with_capacity(bins * n);
    let mut sin_v = Vec::with_capacity(bins * n);
    for k in k_lo..=k_hi {
        for t in 0..n {
            let ang = 2.0 * std::f64::consts::PI * (k * t) as f64 / NFFT as f64;
            cos_v.push(ang.cos());
            sin_v.push(-ang.sin());
        }
    }
    Ok((
        Tensor::constant(vec![bins, n], cos_v)?,
        Tensor::constant(vec![bins, n], sin_v)?,
    ))
}

/// In-band periodogram of a 1-D signal as a (bins, 1) tensor.
fn band_power(x: &Tensor, cos_m: &Tensor, sin_m: &Tensor) -> Result<Tensor, TensorError> {
    let n = x.shape()[0];
    let col = centered(x)?.reshape(vec![n, 1])?;
    let re = cos_m.matmul(&col)?;
    let im = sin_m.matmul(&col)?;
    re.mul(&re)?.add(&im.mul(&im)?)
}

struct SpectralPair {
    pred_power: Tensor,
    label_power: Vec<f64>,
}

fn spectra(
    pred: &Tensor,
    label: &[f64],
    rate_hz: f64,
    band: BandLimits,
) -> Result<SpectralPair, FusionError> {
    let n = check_pair(pred, label)?;
    if n > NFFT {
        return Err(FusionError::InvalidConfig(format!(
            "{n} samples exceed the {NFFT}-point transform"
        )));
    }
    if all_equal(label) {
        return Err(FusionError::NoPulse);
    }
    let (k_lo, k_hi) = band_bins(rate_hz, band)?;
    let (cos_m, sin_m) = dft_mats(n, k_lo, k_hi)?;
    let lt = Tensor::constant(vec![n], label.to_vec())?;
    let label_power = band_power(&lt, &cos_m, &sin_m)?.to_vec();
    if label_power.iter().all(|&p| p <= 0.0) {
        return Err(FusionError::NoPulse);
    }
    Ok(SpectralPair {
        pred_power: band_power(pred, &cos_m, &sin_m)?,
        label_power,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of the prediction's in-band log-power softmax against the
/// label's peak bin.
pub fn freq_ce_loss(
    pred: &Tensor,
    label: &[f64],
    rate_hz: f64,
    band: BandLimits,
) -> Result<Tensor, FusionError> {
    let pair = spectra(pred, label, rate_hz, band)?;
    let target = argmax(&pair.label_power);
    let pe = pair.pred_power.add_scalar(CE_EPS)?;
    let log_sum = pe.sum()?.ln()?;
    let log_target = pe.slice(0, target, target + 1)?.reshape(vec![1])?.ln()?;
    Ok(log_sum.sub(&log_target)?)
}

/// KL divergence from the label's normalized in-band spectrum to the
/// prediction's.
pub fn kl_psd_loss(
    pred: &Tensor,
    label: &[f64],
    rate_hz: f64,
    band: BandLimits,
) -> Result<Tensor, FusionError> {
    let pair = spectra(pred, label, rate_hz, band)?;
    let bins = pair.label_power.len();
    let floored: Vec<f64> = pair.label_power.iter().map(|p| p + PSD_FLOOR).collect();
    let total: f64 = floored.iter().sum();
    let q: Vec<f64> = floored.iter().map(|p| p / total).collect();
    let qt = Tensor::constant(vec![bins, 1], q)?;
    let rp = pair.pred_power.add_scalar(PSD_FLOOR)?;
    let r = rp.div(&rp.sum()?)?;
    Ok(qt.mul(&qt.ln()?.sub(&r.ln()?)?)?.sum()?)
}

/// Weighted sum of the three terms.
pub fn total_loss(
    pred: &Tensor,
    label: &[f64],
    rate_hz: f64,
    band: BandLimits,
    weights: &LossWeights,
) -> Result<Tensor, FusionError> {
    weights.validate()?;
    let np = np_loss(pred, label)?;
    let ce = freq_ce_loss(pred, label, rate_hz, band)?;
    let kl = kl_psd_loss(pred, label, rate_hz, band)?;
    Ok(np
        .scale(weights.np)?
        .add(&ce.scale(weights.ce)?)?
        .add(&kl.scale(weights.kl)?)?)
}
