//! Recording ingestion: frame containers, label CSVs, timestamp alignment,
//! and normalized chunk extraction.
//!
//! On-disk layout per recording: `<root>/<subject>/<session>/` holding
//! `face.m3ft`, `finger.m3ft`, an optional `crops.csv`, and a `labels/`
//! directory with `BVP.csv`, `HR.csv` (required) plus `SpO2.csv`, `RR.csv`,
//! `frames_timestamp.csv` (optional).

mod chunks;
mod image;
mod labels;
mod m3ft;
mod recording;

pub use chunks::{
    align_label, diff_normalize, hr_reference, make_chunks, ChunkPair, CHUNK_FRAMES,
    CHUNK_SIZE_DEFAULT,
};
pub use image::{crop, resize_to_planar, CropBox};
pub use labels::{read_crops_csv, read_series_csv, series_to_signal, write_series_csv};
pub use m3ft::{read_frame_tensor, write_frame_tensor, FrameTensor, M3FT_MAGIC, M3FT_VERSION};
pub use recording::{load_recording, AlignedRecording, RecordingLayout};

use crate::signal::SignalError;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a frame container (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported pixel dtype {0}")]
    UnsupportedDtype(u8),
    #[error("file truncated: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("{0} unexpected bytes after timestamp table")]
    TrailingBytes(usize),
    #[error("timestamps must be strictly increasing (violated at index {index})")]
    NonMonotonicTimestamps { index: usize },
    #[error("bad tensor dimensions: {0}")]
    BadDims(String),
    #[error("bad csv {path}: {detail}")]
    BadCsv { path: String, detail: String },
    #[error("missing label file {0}")]
    MissingLabelFile(String),
    #[error("recording streams share no usable time overlap")]
    NoTemporalOverlap,
    #[error("frame at {frame_ts_ms} ms is {gap_ms} ms from the nearest label sample")]
    LabelGap { frame_ts_ms: i64, gap_ms: i64 },
    #[error("need at least two frames to difference")]
    TooFewFrames,
    #[error("recording has {frames} usable frames, need {min}")]
    RecordingTooShort { frames: usize, min: usize },
    #[error("no reference heart rate available for chunk")]
    NoHeartRateReference,
    #[error(transparent)]
    Signal(#[from] SignalError),
}
