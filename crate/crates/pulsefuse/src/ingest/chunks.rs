//! Chunk extraction: label alignment, frame differencing, normalization.

use super::image::{crop, resize_to_planar, CropBox};
use super::recording::AlignedRecording;
use super::IngestError;
use crate::signal::{estimate_hr, welch_psd_default, zscore, BandLimits, SampledSignal};

pub const CHUNK_FRAMES: usize = 160;
pub const CHUNK_SIZE_DEFAULT: usize = 128;

/// Maximum distance between a frame and its nearest label sample before the
/// gap is treated as a recording fault rather than interpolated over.
const LABEL_GAP_MS: i64 = 250;

/// One normalized training/evaluation window.
#[derive(Clone, Debug)]
pub struct ChunkPair {
    /// CHUNK_FRAMES x 3 x hw x hw, frame-major.
    pub face: Vec<f64>,
    /// CHUNK_FRAMES x 3 x hw x hw, frame-major.
    pub finger: Vec<f64>,
    /// Spatial edge length of both view tensors.
    pub hw: usize,
    /// CHUNK_FRAMES z-scored first-difference label samples.
    pub label: Vec<f64>,
    /// Frame rate measured from the window's timestamps.
    pub rate_hz: f64,
    pub hr_ref_bpm: f64,
    pub subject_id: String,
}

/// Linearly interpolates a label signal onto each frame timestamp.
///
/// Frames may overhang the signal by up to one sample period (values clamp
/// to the end samples); anything worse is a `LabelGap`.
pub fn align_label(frame_ts_ms: &[i64], sig: &SampledSignal) -> Result<Vec<f64>, IngestError> {
    let n = sig.samples.len();
    if n < 2 {
        return Err(IngestError::BadCsv {
            path: String::new(),
            detail: "label signal needs at least two samples".into(),
        });
    }
    let dt_ms = 1000.0 / sig.rate_hz;
    let mut out = Vec::with_capacity(frame_ts_ms.len());
    for &ts in frame_ts_ms {
        let pos = (ts - sig.t0_ms) as f64 / dt_ms;
        let nearest = pos.round().clamp(0.0, (n - 1) as f64);
        let gap_ms = ((ts - sig.t0_ms) as f64 - nearest * dt_ms).abs();
        if gap_ms > LABEL_GAP_MS as f64 || pos < -1.0 || pos > n as f64 {
            return Err(IngestError::LabelGap { frame_ts_ms: ts, gap_ms: gap_ms.round() as i64 });
        }
        let clamped = pos.clamp(0.0, (n - 1) as f64);
        let i0 = clamped.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let frac = clamped - i0 as f64;
        out.push(sig.samples[i0] + (sig.samples[i1] - sig.samples[i0]) * frac);
    }
    Ok(out)
}

/// Frame-difference representation: per pixel and channel,
/// `d(t) = (f(t+1) - f(t)) / (f(t+1) + f(t))` (0 where the denominator is 0),
/// divided by the global standard deviation of all difference values, then
/// zero-padded or trimmed to `out_t` frames.
///
/// The ratio makes the output invariant to a global gain on pixel values.
pub fn diff_normalize(
    frames: &[f64],
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    out_t: usize,
) -> Result<Vec<f64>, IngestError> {
    if t < 2 {
        return Err(IngestError::TooFewFrames);
    }
    let per_frame = c * h * w;
    assert_eq!(frames.len(), t * per_frame, "frame buffer does not match dims");
    let n_diff = t - 1;
    let mut diffs = vec![0.0; n_diff * per_frame];
    for k in 0..n_diff {
        let cur = &frames[k * per_frame..(k + 1) * per_frame];
        let next = &frames[(k + 1) * per_frame..(k + 2) * per_frame];
        let out = &mut diffs[k * per_frame..(k + 1) * per_frame];
        for i in 0..per_frame {
            let denom = next[i] + cur[i];
            out[i] = if denom == 0.0 { 0.0 } else { (next[i] - cur[i]) / denom };
        }
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / diffs.len() as f64).sqrt();
    if sd > 0.0 {
        for v in &mut diffs {
            *v /= sd;
        }
    }
    diffs.resize(out_t * per_frame, 0.0);
    Ok(diffs)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn spectral_hr_ref(aligned_label: &[f64], frame_ts: &[i64]) -> Result<f64, IngestError> {
    let span_ms = (frame_ts[frame_ts.len() - 1] - frame_ts[0]) as f64;
    let sig = SampledSignal {
        samples: aligned_label.to_vec(),
        rate_hz: 1000.0 * (aligned_label.len() - 1) as f64 / span_ms,
        t0_ms: frame_ts[0],
    };
    let psd = welch_psd_default(&sig).map_err(|_| IngestError::NoHeartRateReference)?;
    estimate_hr(&psd, BandLimits::pulse()).map_err(|_| IngestError::NoHeartRateReference)
}

fn in_window_hr(hr_rows: &[(i64, f64)], ts_lo: i64, ts_hi: i64) -> Vec<f64> {
    hr_rows
        .iter()
        .filter(|(t, _)| *t >= ts_lo && *t <= ts_hi)
        .map(|(_, v)| *v)
        .collect()
}

/// Reference HR for one window: median of in-window HR samples when any
/// exist, otherwise a spectral estimate from the aligned label.
fn window_hr_ref(
    hr_rows: &[(i64, f64)],
    ts_lo: i64,
    ts_hi: i64,
    aligned_label: &[f64],
    frame_ts: &[i64],
) -> Result<f64, IngestError> {
    let in_window = in_window_hr(hr_rows, ts_lo, ts_hi);
    if !in_window.is_empty() {
        return Ok(median(in_window));
    }
    spectral_hr_ref(aligned_label, frame_ts)
}

/// Reference HR over an arbitrary frame window of a loaded recording. The
/// pulse label is only aligned when no HR samples fall inside the window.
pub fn hr_reference(rec: &AlignedRecording, frame_ts: &[i64]) -> Result<f64, IngestError> {
    if frame_ts.len() < 2 {
        return Err(IngestError::NoHeartRateReference);
    }
    let in_window = in_window_hr(&rec.hr, frame_ts[0], frame_ts[frame_ts.len() - 1]);
    if !in_window.is_empty() {
        return Ok(median(in_window));
    }
    let aligned = align_label(frame_ts, &rec.bvp)?;
    spectral_hr_ref(&aligned, frame_ts)
}

/// Cuts an aligned recording into non-overlapping CHUNK_FRAMES windows.
///
/// Face frames are cropped to their sidecar box when one exists for the
/// source frame index (full frame otherwise) and bilinearly resized to
/// `target_hw`; finger frames are resized directly. The label is the
/// z-scored first difference of the aligned pulse wave over the window.
pub fn make_chunks(
    rec: &AlignedRecording,
    crops: Option<&[CropBox]>,
    target_hw: usize,
) -> Result<Vec<ChunkPair>, IngestError> {
    let n = rec.face.t.min(rec.finger.t);
    let n_chunks = n / CHUNK_FRAMES;
    if n_chunks == 0 {
        return Err(IngestError::RecordingTooShort { frames: n, min: CHUNK_FRAMES });
    }
    let per_frame = 3 * target_hw * target_hw;
    let mut chunks = Vec::with_capacity(n_chunks);
    for k in 0..n_chunks {
        let lo = k * CHUNK_FRAMES;
        let hi = lo + CHUNK_FRAMES;
        let frame_ts = &rec.face.timestamps_ms[lo..hi];

        let mut face_raw = Vec::with_capacity(CHUNK_FRAMES * per_frame);
        for i in lo..hi {
            let frame = rec.face.frame(i);
            let source_index = rec.face_frame_offset + i;
            let boxed = crops
                .and_then(|cs| cs.iter().find(|b| b.frame_index == source_index))
                .and_then(|b| crop(frame, rec.face.h, rec.face.w, rec.face.c, b));
            let planar = match &boxed {
                Some((bytes, ch, cw)) => {
                    resize_to_planar(bytes, *ch, *cw, rec.face.c, target_hw, target_hw)
                }
                None => resize_to_planar(
                    frame,
                    rec.face.h,
                    rec.face.w,
                    rec.face.c,
                    target_hw,
                    target_hw,
                ),
            };
            face_raw.extend_from_slice(&planar);
        }
        let mut finger_raw = Vec::with_capacity(CHUNK_FRAMES * per_frame);
        for i in lo..hi {
            finger_raw.extend_from_slice(&resize_to_planar(
                rec.finger.frame(i),
                rec.finger.h,
                rec.finger.w,
                rec.finger.c,
                target_hw,
                target_hw,
            ));
        }
        let face =
            diff_normalize(&face_raw, CHUNK_FRAMES, 3, target_hw, target_hw, CHUNK_FRAMES)?;
        let finger =
            diff_normalize(&finger_raw, CHUNK_FRAMES, 3, target_hw, target_hw, CHUNK_FRAMES)?;

        let aligned = align_label(frame_ts, &rec.bvp)?;
        let mut label: Vec<f64> = aligned.windows(2).map(|p| p[1] - p[0]).collect();
        label.resize(CHUNK_FRAMES, 0.0);
        zscore(&mut label);

        let hr_ref_bpm =
            window_hr_ref(&rec.hr, frame_ts[0], frame_ts[CHUNK_FRAMES - 1], &aligned, frame_ts)?;
        let rate_hz = 1000.0 * (CHUNK_FRAMES - 1) as f64
            / (frame_ts[CHUNK_FRAMES - 1] - frame_ts[0]) as f64;

        chunks.push(ChunkPair {
            face,
            finger,
            hw: target_hw,
            label,
            rate_hz,
            hr_ref_bpm,
            subject_id: rec.subject_id.clone(),
        });
    }
    Ok(chunks)
}
