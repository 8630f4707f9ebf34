//! Pulse extraction by projecting out the mean color direction.

use super::{band_power_parts, output_signal, RgbTrace, RppgError};
use crate::signal::{zscore, SampledSignal};

const RESIDUAL_FLOOR: f64 = 1e-9;

/// Removes the intensity axis q (the normalized mean color vector) and keeps
/// whichever orthogonal component carries more in-band power.
///
/// The trace matrix is per-channel z-scored with the channel offsets added
/// back, so q reflects the skin tone while the fluctuations are equalized.
/// If projecting through I - qq^T leaves less than 1e-9 of the fluctuation
/// energy, the trace is pure intensity modulation and carries no pulse.
pub fn omit(trace: &RgbTrace) -> Result<SampledSignal, RppgError> {
    let n = trace.len();
    let nf = n as f64;
    let mut mu = [0.0f64; 3];
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(3);
    for (c, ch) in trace.channels().iter().enumerate() {
        mu[c] = ch.iter().sum::<f64>() / nf;
        let mut v = ch.to_vec();
        zscore(&mut v);
        z.push(v);
    }
    let mu_norm = (mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2]).sqrt();
    if mu_norm == 0.0 {
        return Err(RppgError::NoPulse);
    }
    let q = [mu[0] / mu_norm, mu[1] / mu_norm, mu[2] / mu_norm];

    let mut fluct = 0.0f64;
    let mut residual = 0.0f64;
    for t in 0..n {
        let v = [z[0][t], z[1][t], z[2][t]];
        let along = q[0] * v[0] + q[1] * v[1] + q[2] * v[2];
        let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        fluct += vv;
        residual += (vv - along * along).max(0.0);
    }
    if fluct == 0.0 || residual < RESIDUAL_FLOOR * fluct {
        return Err(RppgError::NoPulse);
    }

    let (u2, u3) = householder_complement(q);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for u in [u2, u3] {
        let comp: Vec<f64> = (0..n)
            .map(|t| {
                u[0] * (z[0][t] + mu[0]) + u[1] * (z[1][t] + mu[1]) + u[2] * (z[2][t] + mu[2])
            })
            .collect();
        let (in_band, _) = band_power_parts(&comp, trace.rate_hz);
        if best.as_ref().map_or(true, |(p, _)| in_band > *p) {
            best = Some((in_band, comp));
        }
    }
    let (_, mut samples) = best.expect("two components");
    if samples.iter().all(|&v| v == samples[0]) {
        return Err(RppgError::NoPulse);
    }
    zscore(&mut samples);
    Ok(output_signal(samples, trace.rate_hz))
}

/// Orthonormal basis of the plane orthogonal to unit vector q, via the
/// Householder reflection that maps e1 onto q.
pub(crate) fn householder_complement(q: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let v = [q[0] - 1.0, q[1], q[2]];
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if vv < 1e-24 {
        return ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    }
    let col = |e: usize| {
        let s = 2.0 * v[e] / vv;
        let mut u = [0.0f64; 3];
        for i in 0..3 {
            u[i] = -s * v[i];
        }
        u[e] += 1.0;
        u
    };
    (col(1), col(2))
}

#[cfg(test)]
pub(crate) fn projector(q: [f64; 3]) -> [[f64; 3]; 3] {
    let mut p = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] = if i == j { 1.0 } else { 0.0 } - q[i] * q[j];
        }
    }
    p
}
