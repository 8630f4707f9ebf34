//! Per-frame crop and resize on interleaved byte frames.

/// One face crop box in source-frame pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Cuts `bx` out of an H x W x C interleaved frame, clipping to the frame
/// bounds. Returns None when nothing remains after clipping.
pub fn crop(frame: &[u8], h: usize, w: usize, c: usize, bx: &CropBox) -> Option<(Vec<u8>, usize, usize)> {
    if bx.x >= w || bx.y >= h || bx.w == 0 || bx.h == 0 {
        return None;
    }
    let x1 = (bx.x + bx.w).min(w);
    let y1 = (bx.y + bx.h).min(h);
    let (cw, ch) = (x1 - bx.x, y1 - bx.y);
    let mut out = Vec::with_capacity(ch * cw * c);
    for row in bx.y..y1 {
        let start = (row * w + bx.x) * c;
        out.extend_from_slice(&frame[start..start + cw * c]);
    }
    Some((out, ch, cw))
}

/// Bilinear resize of an H x W x C interleaved byte frame to a planar
/// C x out_h x out_w f64 tensor scaled to [0, 1]. Sample positions use
/// half-pixel centers, clamped at the borders.
pub fn resize_to_planar(
    frame: &[u8],
    h: usize,
    w: usize,
    c: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert!(h > 0 && w > 0 && out_h > 0 && out_w > 0);
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    // (low index, high index, high weight) per output row/column.
    let axis = |out_n: usize, scale: f64, in_n: usize| -> Vec<(usize, usize, f64)> {
        (0..out_n)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_n - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_n - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = axis(out_h, scale_y, h);
    let cols = axis(out_w, scale_x, w);
    let mut out = vec![0.0; c * out_h * out_w];
    for (oy, &(y0, y1, wy)) in rows.iter().enumerate() {
        for (ox, &(x0, x1, wx)) in cols.iter().enumerate() {
            let base00 = (y0 * w + x0) * c;
            let base01 = (y0 * w + x1) * c;
            let base10 = (y1 * w + x0) * c;
            let base11 = (y1 * w + x1) * c;
            for ch in 0..c {
                let p00 = frame[base00 + ch] as f64;
                let p01 = frame[base01 + ch] as f64;
                let p10 = frame[base10 + ch] as f64;
                let p11 = frame[base11 + ch] as f64;
                let top = p00 + (p01 - p00) * wx;
                let bot = p10 + (p11 - p10) * wx;
                out[ch * out_h * out_w + oy * out_w + ox] = (top + (bot - top) * wy) / 255.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn crop_clips_to_bounds() {
        // 3x4 single-channel frame, values = row*10 + col.
        let frame: Vec<u8> = (0..3).flat_map(|r| (0..4).map(move |c| (r * 10 + c) as u8)).collect();
        let bx = CropBox { frame_index: 0, x: 2, y: 1, w: 5, h: 5 };
        let (out, ch, cw) = crop(&frame, 3, 4, 1, &bx).unwrap();
        assert_eq!((ch, cw), (2, 2));
        assert_eq!(out, vec![12, 13, 22, 23]);
    }

    #[test]
    fn crop_outside_frame_is_none() {
        let frame = vec![0u8; 12];
        let bx = CropBox { frame_index: 0, x: 4, y: 0, w: 2, h: 2 };
        assert!(crop(&frame, 3, 4, 1, &bx).is_none());
        let degenerate = CropBox { frame_index: 0, x: 0, y: 0, w: 0, h: 2 };
        assert!(crop(&frame, 3, 4, 1, &degenerate).is_none());
    }

    #[test]
    fn identity_resize_scales_bytes_to_unit() {
        let frame: Vec<u8> = vec![0, 51, 102, 153, 204, 255];
        let out = resize_to_planar(&frame, 2, 3, 1, 2, 3);
        for (o, f) in out.iter().zip(&frame) {
            assert_relative_eq!(o, &(*f as f64 / 255.0));
        }
    }

    #[test]
    fn downsample_to_single_pixel_averages() {
        let frame: Vec<u8> = vec![10, 20, 30, 40];
        let out = resize_to_planar(&frame, 2, 2, 1, 1, 1);
        assert_relative_eq!(out[0], 25.0 / 255.0);
    }

    #[test]
    fn planar_layout_separates_channels() {
        // One pixel, three channels.
        let frame: Vec<u8> = vec![10, 20, 30];
        let out = resize_to_planar(&frame, 1, 1, 3, 2, 2);
        assert_eq!(out.len(), 12);
        for (ch, want) in [(0usize, 10.0), (1, 20.0), (2, 30.0)] {
            for i in 0..4 {
                assert_relative_eq!(out[ch * 4 + i], want / 255.0);
            }
        }
    }

    #[test]
    fn doubling_pixel_values_doubles_output_exactly() {
        let frame: Vec<u8> = vec![3, 9, 21, 60, 15, 33, 45, 18, 6, 12, 24, 48];
        let doubled: Vec<u8> = frame.iter().map(|v| v * 2).collect();
        let a = resize_to_planar(&frame, 3, 4, 1, 2, 2);
        let b = resize_to_planar(&doubled, 3, 4, 1, 2, 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*y, *x * 2.0);
        }
    }
}
