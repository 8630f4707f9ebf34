//! Systolic peak detection for pulse waveforms.

use super::SampledSignal;

/// Indices of strict local maxima above the signal median, thinned so that
/// surviving peaks are at least `min_dist_s` apart.
///
/// Thinning is greedy by amplitude: the tallest candidate wins, then any
/// candidate closer than the minimum distance to an accepted peak is
/// dropped. Equal-height candidates resolve to the earlier index. The
/// result is sorted ascending and may be empty.
pub fn detect_peaks(sig: &SampledSignal, min_dist_s: f64) -> Vec<usize> {
    let x = &sig.samples;
    if x.len() < 3 {
        return Vec::new();
    }
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };

    let mut candidates: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1] && x[i] > median)
        .collect();
    candidates.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap().then(i.cmp(&j)));

    let min_dist = ((min_dist_s * sig.rate_hz).round() as usize).max(1);
    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted.iter().all(|&a| i.abs_diff(a) >= min_dist) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    accepted
}
