//! Recording discovery and timestamp-aligned loading.

use std::path::{Path, PathBuf};

use super::labels::{read_series_csv, series_to_signal};
use super::m3ft::{read_frame_tensor, FrameTensor};
use super::IngestError;
use crate::signal::SampledSignal;

/// File locations of one recorded session.
#[derive(Clone, Debug)]
pub struct RecordingLayout {
    pub subject_id: String,
    pub face_path: PathBuf,
    pub finger_path: PathBuf,
    pub label_dir: PathBuf,
}

impl RecordingLayout {
    /// Scans `<root>/<subject>/<session>/` directories containing a
    /// `face.m3ft`. Output is sorted by path for determinism.
    pub fn discover(root: &Path) -> Result<Vec<RecordingLayout>, IngestError> {
        let mut layouts = Vec::new();
        let mut subjects: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subjects.sort();
        for subject in subjects {
            let subject_id = subject
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut sessions: Vec<PathBuf> = std::fs::read_dir(&subject)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            sessions.sort();
            for session in sessions {
                let face_path = session.join("face.m3ft");
                if !face_path.exists() {
                    continue;
                }
                layouts.push(RecordingLayout {
                    subject_id: subject_id.clone(),
                    face_path,
                    finger_path: session.join("finger.m3ft"),
                    label_dir: session.join("labels"),
                });
            }
        }
        Ok(layouts)
    }

    /// The crop sidecar conventionally sits next to the face video.
    pub fn crops_path(&self) -> PathBuf {
        self.face_path.with_file_name("crops.csv")
    }
}

/// All streams of one session, trimmed to their common time span.
#[derive(Clone, Debug)]
pub struct AlignedRecording {
    pub subject_id: String,
    pub face: FrameTensor,
    pub finger: FrameTensor,
    pub bvp: SampledSignal,
    /// (timestamp_ms, bpm) reference heart-rate samples.
    pub hr: Vec<(i64, f64)>,
    /// (timestamp_ms, percent) oxygen saturation samples; may be empty.
    pub spo2: Vec<(i64, f64)>,
    /// Respiration wave when RR.csv is present.
    pub resp: Option<SampledSignal>,
    /// Source index of the first retained face frame; crop-box lookups use
    /// source indices.
    pub face_frame_offset: usize,
    pub finger_frame_offset: usize,
}

const MIN_OVERLAP_FRAMES: usize = 160;

fn trim_frames(ft: &FrameTensor, t0: i64, t1: i64) -> (FrameTensor, usize) {
    let start = ft.timestamps_ms.iter().position(|t| *t >= t0).unwrap_or(ft.t);
    let end = ft.timestamps_ms.iter().rposition(|t| *t <= t1).map_or(start, |i| i + 1);
    (ft.window(start, end.max(start)), start)
}

fn trim_signal(sig: &SampledSignal, t0: i64, t1: i64) -> SampledSignal {
    let dt = 1000.0 / sig.rate_hz;
    // One period of slack at each end keeps interpolation legal at the edges.
    let lo = ((t0 - sig.t0_ms) as f64 / dt - 1.0).floor().max(0.0) as usize;
    let hi_pos = ((t1 - sig.t0_ms) as f64 / dt + 1.0).ceil() as usize;
    let hi = (hi_pos + 1).min(sig.samples.len());
    SampledSignal {
        samples: sig.samples[lo..hi].to_vec(),
        rate_hz: sig.rate_hz,
        t0_ms: sig.t0_ms + (lo as f64 * dt).round() as i64,
    }
}

pub fn load_recording(layout: &RecordingLayout) -> Result<AlignedRecording, IngestError> {
    let face = read_frame_tensor(&layout.face_path)?;
    let finger = read_frame_tensor(&layout.finger_path)?;

    let require = |name: &str| -> Result<Vec<(i64, f64)>, IngestError> {
        let path = layout.label_dir.join(name);
        if !path.exists() {
            return Err(IngestError::MissingLabelFile(name.to_string()));
        }
        read_series_csv(&path)
    };
    let optional = |name: &str| -> Result<Option<Vec<(i64, f64)>>, IngestError> {
        let path = layout.label_dir.join(name);
        if path.exists() {
            read_series_csv(&path).map(Some)
        } else {
            Ok(None)
        }
    };

    let bvp_rows = require("BVP.csv")?;
    let hr_rows = require("HR.csv")?;
    let spo2_rows = optional("SpO2.csv")?.unwrap_or_default();
    let resp = optional("RR.csv")?.map(|rows| series_to_signal(&rows)).transpose()?;
    let bvp = series_to_signal(&bvp_rows)?;

    let bvp_end =
        bvp.t0_ms + ((bvp.samples.len() - 1) as f64 * 1000.0 / bvp.rate_hz).round() as i64;
    let t0 = face.timestamps_ms[0]
        .max(finger.timestamps_ms[0])
        .max(bvp.t0_ms);
    let t1 = (*face.timestamps_ms.last().unwrap())
        .min(*finger.timestamps_ms.last().unwrap())
        .min(bvp_end);
    if t1 <= t0 {
        return Err(IngestError::NoTemporalOverlap);
    }

    let (face, face_frame_offset) = trim_frames(&face, t0, t1);
    let (finger, finger_frame_offset) = trim_frames(&finger, t0, t1);
    if face.t < MIN_OVERLAP_FRAMES || finger.t < MIN_OVERLAP_FRAMES {
        return Err(IngestError::NoTemporalOverlap);
    }
    let bvp = trim_signal(&bvp, t0, t1);
    let hr: Vec<(i64, f64)> = hr_rows.into_iter().filter(|(t, _)| *t >= t0 && *t <= t1).collect();
    let spo2: Vec<(i64, f64)> =
        spo2_rows.into_iter().filter(|(t, _)| *t >= t0 && *t <= t1).collect();

    Ok(AlignedRecording {
        subject_id: layout.subject_id.clone(),
        face,
        finger,
        bvp,
        hr,
        spo2,
        resp,
        face_frame_offset,
        finger_frame_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::super::labels::write_series_csv;
    use super::super::m3ft::write_frame_tensor;
    use super::*;

    fn write_recording(root: &Path, subject: &str, n_frames: usize, shift_finger_ms: i64) {
        let session = root.join(subject).join("v01");
        std::fs::create_dir_all(session.join("labels")).unwrap();
        let fps = 30.0;
        let (h, w, c) = (2usize, 2usize, 3usize);
        let make = |offset_ms: i64| {
            let ts: Vec<i64> =
                (0..n_frames).map(|i| offset_ms + (1000.0 * i as f64 / fps).round() as i64).collect();
            FrameTensor::new(
                n_frames,
                h,
                w,
                c,
                vec![128u8; n_frames * h * w * c],
                ts,
            )
            .unwrap()
        };
        write_frame_tensor(&session.join("face.m3ft"), &make(0)).unwrap();
        write_frame_tensor(&session.join("finger.m3ft"), &make(shift_finger_ms)).unwrap();
        let n_bvp = (n_frames as f64 / fps * 20.0) as usize + 40;
        let bvp: Vec<(i64, f64)> = (0..n_bvp)
            .map(|i| {
                let t = shift_finger_ms.min(0) + 50 * i as i64;
                (t, (t as f64 / 200.0).sin())
            })
            .collect();
        write_series_csv(&session.join("labels/BVP.csv"), "value", &bvp).unwrap();
        let hr: Vec<(i64, f64)> = (0..10).map(|i| (1000 * i, 70.0)).collect();
        write_series_csv(&session.join("labels/HR.csv"), "bpm", &hr).unwrap();
    }

    #[test]
    fn discover_finds_sessions_sorted() {
        let dir = tempfile::tempdir().unwrap();
        write_recording(dir.path(), "s02", 170, 0);
        write_recording(dir.path(), "s01", 170, 0);
        let layouts = RecordingLayout::discover(dir.path()).unwrap();
        assert_eq!(layouts.len(), 2);
        assert_eq!(layouts[0].subject_id, "s01");
        assert_eq!(layouts[1].subject_id, "s02");
    }

    #[test]
    fn identical_spans_load_without_cropping() {
        let dir = tempfile::tempdir().unwrap();
        write_recording(dir.path(), "s01", 170, 0);
        let layouts = RecordingLayout::discover(dir.path()).unwrap();
        let rec = load_recording(&layouts[0]).unwrap();
        assert_eq!(rec.face.t, 170);
        assert_eq!(rec.finger.t, 170);
        assert_eq!(rec.face_frame_offset, 0);
        assert_eq!(rec.subject_id, "s01");
    }

    #[test]
    fn missing_bvp_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_recording(dir.path(), "s01", 170, 0);
        let layouts = RecordingLayout::discover(dir.path()).unwrap();
        std::fs::remove_file(layouts[0].label_dir.join("BVP.csv")).unwrap();
        assert!(matches!(
            load_recording(&layouts[0]),
            Err(IngestError::MissingLabelFile(name)) if name == "BVP.csv"
        ));
    }

    #[test]
    fn disjoint_views_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        // Finger starts long after the face video ends.
        write_recording(dir.path(), "s01", 170, 60_000);
        let layouts = RecordingLayout::discover(dir.path()).unwrap();
        assert!(matches!(load_recording(&layouts[0]), Err(IngestError::NoTemporalOverlap)));
    }

    #[test]
    fn partial_overlap_trims_to_intersection() {
        let dir = tempfile::tempdir().unwrap();
        // Finger shifted by ~1 s: the first ~30 face frames fall outside.
        write_recording(dir.path(), "s01", 200, 1000);
        let layouts = RecordingLayout::discover(dir.path()).unwrap();
        let rec = load_recording(&layouts[0]).unwrap();
        assert!(rec.face_frame_offset >= 29, "offset {}", rec.face_frame_offset);
        assert_eq!(rec.finger_frame_offset, 0);
        assert!(rec.face.timestamps_ms[0] >= 1000);
        assert!(rec.face.t >= 160);
    }
}
