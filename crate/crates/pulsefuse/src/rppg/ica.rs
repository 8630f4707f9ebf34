//! Blind source separation pulse extraction.

use nalgebra::{Matrix3, SymmetricEigen};

use super::{band_power_fraction, fix_sign, output_signal, RgbTrace, RppgError};
use crate::signal::{zscore, SampledSignal};

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e8;

/// Symmetric fixed-point ICA with a tanh contrast over the three channels.
///
/// Channels are z-scored and whitened; the rotation starts from the identity
/// so the procedure is deterministic. Of the three recovered components the
/// one with the largest in-band (0.5-3 Hz) power fraction is returned,
/// sign-fixed so its dominant lobe points up.
pub fn ica(trace: &RgbTrace) -> Result<SampledSignal, RppgError> {
    ica_with_iters(trace, MAX_ITER)
}

pub(crate) fn ica_with_iters(
    trace: &RgbTrace,
    max_iter: usize,
) -> Result<SampledSignal, RppgError> {
    let n = trace.len();
    let nf = n as f64;
    let mut x: Vec<Vec<f64>> = trace
        .channels()
        .iter()
        .map(|ch| {
            let mut v = ch.to_vec();
            zscore(&mut v);
            v
        })
        .collect();

    let cov = Matrix3::from_fn(|i, j| {
        x[i].iter().zip(x[j].iter()).map(|(a, b)| a * b).sum::<f64>() / nf
    });
    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if lmin <= 0.0 {
        f64::INFINITY
    } else {
        lmax / lmin
    };
    if !(condition < MAX_CONDITION) {
        return Err(RppgError::RankDeficient { condition });
    }

    // Whitened rows z = D^{-1/2} U^T x.
    let mut z = vec![vec![0.0f64; n]; 3];
    for i in 0..3 {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for t in 0..n {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += eig.eigenvectors[(j, i)] * x[j][t];
            }
            z[i][t] = acc * scale;
        }
    }
    x.clear();

    let mut b = Matrix3::<f64>::identity();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut bnew = Matrix3::<f64>::zeros();
        for i in 0..3 {
            let mut e_zg = [0.0f64; 3];
            let mut e_gp = 0.0f64;
            for t in 0..n {
                let y = b[(i, 0)] * z[0][t] + b[(i, 1)] * z[1][t] + b[(i, 2)] * z[2][t];
                let g = y.tanh();
                e_gp += 1.0 - g * g;
                for j in 0..3 {
                    e_zg[j] += z[j][t] * g;
                }
            }
            for j in 0..3 {
                bnew[(i, j)] = e_zg[j] / nf - (e_gp / nf) * b[(i, j)];
            }
        }
        // Symmetric decorrelation keeps all rows orthonormal at once.
        let m = bnew * bnew.transpose();
        let me = SymmetricEigen::new(m);
        if me.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(RppgError::IcaNoConvergence {
                iterations: max_iter,
            });
        }
        let dinv = Matrix3::from_diagonal(&me.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let bdecor = me.eigenvectors * dinv * me.eigenvectors.transpose() * bnew;
        let delta = (0..3)
            .map(|i| {
                let d: f64 = (0..3).map(|j| bdecor[(i, j)] * b[(i, j)]).sum();
                (1.0 - d.abs()).abs()
            })
            .fold(0.0, f64::max);
        b = bdecor;
        if delta < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(RppgError::IcaNoConvergence {
            iterations: max_iter,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..3 {
        let comp: Vec<f64> = (0..n)
            .map(|t| b[(i, 0)] * z[0][t] + b[(i, 1)] * z[1][t] + b[(i, 2)] * z[2][t])
            .collect();
        let frac = band_power_fraction(&comp, trace.rate_hz);
        if best.as_ref().map_or(true, |(f, _)| frac > *f) {
            best = Some((frac, comp));
        }
    }
    let (_, mut samples) = best.expect("three components");
    fix_sign(&mut samples);
    Ok(output_signal(samples, trace.rate_hz))
}
