//! Raw frame container. All integers little-endian:
//!
//! ```text
//! magic "M3FT" | u32 version=1 | u32 T | u32 H | u32 W | u32 C
//! | u8 dtype (0 = unsigned byte) | 3 reserved bytes
//! | T*H*W*C pixel bytes, frame-major | T i64 millisecond timestamps
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::IngestError;

pub const M3FT_MAGIC: [u8; 4] = *b"M3FT";
pub const M3FT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 * 4 + 1 + 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameTensor {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Frame-major, each frame H*W*C interleaved bytes.
    pub pixels: Vec<u8>,
    pub timestamps_ms: Vec<i64>,
}

impl FrameTensor {
    pub fn new(
        t: usize,
        h: usize,
        w: usize,
        c: usize,
        pixels: Vec<u8>,
        timestamps_ms: Vec<i64>,
    ) -> Result<Self, IngestError> {
        let ft = FrameTensor { t, h, w, c, pixels, timestamps_ms };
        ft.validate()?;
        Ok(ft)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.t == 0 || self.h == 0 || self.w == 0 || self.c == 0 {
            return Err(IngestError::BadDims(format!(
                "zero dimension in {}x{}x{}x{}",
                self.t, self.h, self.w, self.c
            )));
        }
        let expected = self.t * self.h * self.w * self.c;
        if self.pixels.len() != expected {
            return Err(IngestError::BadDims(format!(
                "{} pixel bytes for {}x{}x{}x{}",
                self.pixels.len(),
                self.t,
                self.h,
                self.w,
                self.c
            )));
        }
        if self.timestamps_ms.len() != self.t {
            return Err(IngestError::BadDims(format!(
                "{} timestamps for {} frames",
                self.timestamps_ms.len(),
                self.t
            )));
        }
        for (i, pair) in self.timestamps_ms.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(IngestError::NonMonotonicTimestamps { index: i + 1 });
            }
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }

    /// Mean frame rate implied by the embedded timestamps.
    pub fn rate_hz(&self) -> f64 {
        if self.t < 2 {
            return 0.0;
        }
        let span = (self.timestamps_ms[self.t - 1] - self.timestamps_ms[0]) as f64;
        1000.0 * (self.t - 1) as f64 / span
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.frame_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Retains frames [start, end), keeping their timestamps.
    pub fn window(&self, start: usize, end: usize) -> FrameTensor {
        let n = self.frame_len();
        FrameTensor {
            t: end - start,
            h: self.h,
            w: self.w,
            c: self.c,
            pixels: self.pixels[start * n..end * n].to_vec(),
            timestamps_ms: self.timestamps_ms[start..end].to_vec(),
        }
    }
}

pub fn write_frame_tensor(path: &Path, tensor: &FrameTensor) -> Result<(), IngestError> {
    tensor.validate()?;
    let mut buf =
        Vec::with_capacity(HEADER_LEN + tensor.pixels.len() + 8 * tensor.timestamps_ms.len());
    buf.extend_from_slice(&M3FT_MAGIC);
    buf.extend_from_slice(&M3FT_VERSION.to_le_bytes());
    for dim in [tensor.t, tensor.h, tensor.w, tensor.c] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    buf.push(0); // dtype: unsigned byte
    buf.extend_from_slice(&[0, 0, 0]);
    buf.extend_from_slice(&tensor.pixels);
    for ts in &tensor.timestamps_ms {
        buf.extend_from_slice(&ts.to_le_bytes());
    }
    let tmp = path.with_extension("m3ft.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_frame_tensor(path: &Path) -> Result<FrameTensor, IngestError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::TruncatedFile { expected: HEADER_LEN, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != M3FT_MAGIC {
        return Err(IngestError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != M3FT_VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (t, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
    let dtype = bytes[24];
    if dtype != 0 {
        return Err(IngestError::UnsupportedDtype(dtype));
    }
    let n_pixels = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| IngestError::BadDims("dimension product overflows".into()))?;
    let expected = HEADER_LEN + n_pixels + 8 * t;
    if bytes.len() < expected {
        return Err(IngestError::TruncatedFile { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(IngestError::TrailingBytes(bytes.len() - expected));
    }
    let pixels = bytes[HEADER_LEN..HEADER_LEN + n_pixels].to_vec();
    let ts_base = HEADER_LEN + n_pixels;
    let timestamps_ms: Vec<i64> = (0..t)
        .map(|i| i64::from_le_bytes(bytes[ts_base + 8 * i..ts_base + 8 * (i + 1)].try_into().unwrap()))
        .collect();
    FrameTensor::new(t, h, w, c, pixels, timestamps_ms)
}
