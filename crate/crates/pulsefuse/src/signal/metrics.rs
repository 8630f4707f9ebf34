//! Agreement metrics between estimated and reference heart rates.

use super::SignalError;

/// Summary statistics for a set of (estimate, reference) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub mae_bpm: f64,
    pub rmse_bpm: f64,
    /// Mean absolute percentage error; references must be nonzero.
    pub mape_pct: f64,
    /// Pearson correlation, `None` when undefined (fewer than two pairs or a
    /// constant series).
    pub pearson_r: Option<f64>,
}

/// Bland–Altman agreement analysis of estimate minus reference differences.
#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltman {
    pub n: usize,
    pub bias_bpm: f64,
    /// Sample standard deviation of the differences.
    pub sd_bpm: f64,
    pub loa_lo_bpm: f64,
    pub loa_hi_bpm: f64,
    /// Percentage of pairs whose difference lies inside the limits of
    /// agreement (inclusive).
    pub within_pct: f64,
}

/// Pearson correlation coefficient, clamped to [-1, 1].
///
/// Errors with `DegenerateInput` when either series is constant, and with
/// `EmptyInput`/`LengthMismatch` on malformed inputs. Needs at least two
/// pairs.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, SignalError> {
    if a.is_empty() || b.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(SignalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(SignalError::DegenerateInput("pearson needs at least 2 pairs"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let da = x - ma;
        let db = y - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(SignalError::DegenerateInput("constant series has no correlation"));
    }
    // sqrt of the product (not product of sqrts) keeps r of a series with
    // itself exactly 1.
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// MAE, RMSE, MAPE and correlation for paired estimates and references.
pub fn hr_metrics(est: &[f64], reference: &[f64]) -> Result<MetricsReport, SignalError> {
    if est.is_empty() || reference.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    if est.len() != reference.len() {
        return Err(SignalError::LengthMismatch { left: est.len(), right: reference.len() });
    }
    let n = est.len() as f64;
    let (mut abs_sum, mut sq_sum, mut pct_sum) = (0.0, 0.0, 0.0);
    for (e, r) in est.iter().zip(reference.iter()) {
        let d = e - r;
        abs_sum += d.abs();
        sq_sum += d * d;
        pct_sum += (d / r).abs();
    }
    Ok(MetricsReport {
        n: est.len(),
        mae_bpm: abs_sum / n,
        rmse_bpm: (sq_sum / n).sqrt(),
        mape_pct: 100.0 * pct_sum / n,
        pearson_r: pearson(est, reference).ok(),
    })
}

/// Bland–Altman bias and 1.96-sigma limits of agreement. Needs at least two
/// pairs for the sample standard deviation.
pub fn bland_altman(est: &[f64], reference: &[f64]) -> Result<BlandAltman, SignalError> {
    if est.is_empty() || reference.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    if est.len() != reference.len() {
        return Err(SignalError::LengthMismatch { left: est.len(), right: reference.len() });
    }
    if est.len() < 2 {
        return Err(SignalError::DegenerateInput("bland_altman needs at least 2 pairs"));
    }
    let n = est.len();
    let diffs: Vec<f64> = est.iter().zip(reference.iter()).map(|(e, r)| e - r).collect();
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - bias) * (d - bias)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let loa_lo = bias - 1.96 * sd;
    let loa_hi = bias + 1.96 * sd;
    let within = diffs.iter().filter(|d| **d >= loa_lo && **d <= loa_hi).count();
    Ok(BlandAltman {
        n,
        bias_bpm: bias,
        sd_bpm: sd,
        loa_lo_bpm: loa_lo,
        loa_hi_bpm: loa_hi,
        within_pct: 100.0 * within as f64 / n as f64,
    })
}
