//! Single-view branch: stem, temporal-difference convolution, selective
//! state-space scan, and the gated layer tying them together.
//!
//! Feature maps travel as (C, T, H, W) tensors; sequence ops view them as
//! (T*H*W, C) matrices in temporal-major order (all spatial positions of
//! frame t come before frame t+1), scanned forward only.

mod block;
mod core;
mod mamba;
mod stem;
mod tdc;

pub use block::BranchBlock;
pub use core::SsmCore;
pub use mamba::MambaLayer;
pub use stem::{Stem, StemPlan};
pub use tdc::TemporalDiffConv;

use crate::nn::{InitStream, ParamStore, Tensor, TensorError};

/// (C, T, H, W) feature map to a (T*H*W, C) sequence, temporal-major.
pub fn to_sequence(x: &Tensor) -> Result<Tensor, TensorError> {
    let s = x.shape().to_vec();
    if s.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "to_sequence",
            detail: format!("expected 4-D feature map, got {s:?}"),
        });
    }
    x.permute4([1, 2, 3, 0])?
        .reshape(vec![s[1] * s[2] * s[3], s[0]])
}

/// Inverse of [`to_sequence`] for known frame geometry.
pub fn to_feature_map(
    seq: &Tensor,
    t: usize,
    h: usize,
    w: usize,
) -> Result<Tensor, TensorError> {
    let s = seq.shape().to_vec();
    if s.len() != 2 || s[0] != t * h * w {
        return Err(TensorError::ShapeMismatch {
            op: "to_feature_map",
            detail: format!("sequence {s:?} does not cover {t}x{h}x{w} positions"),
        });
    }
    seq.reshape(vec![t, h, w, s[1]])?.permute4([3, 0, 1, 2])
}

/// ln(e^y - 1), the inverse of softplus, for positive targets.
pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

pub(crate) fn param_with_values(
    store: &mut ParamStore,
    name: &str,
    shape: Vec<usize>,
    values: Vec<f64>,
) -> Result<Tensor, TensorError> {
    let t = Tensor::leaf(shape, values, true)?;
    store.insert(name, t.clone())?;
    Ok(t)
}

pub(crate) fn param_normal(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    shape: Vec<usize>,
    sd: f64,
) -> Result<Tensor, TensorError> {
    let n = shape.iter().product();
    let mut stream = InitStream::new(seed, name);
    param_with_values(store, name, shape, stream.fill_normal(n, sd))
}

pub(crate) fn param_full(
    store: &mut ParamStore,
    name: &str,
    shape: Vec<usize>,
    value: f64,
) -> Result<Tensor, TensorError> {
    let n: usize = shape.iter().product();
    param_with_values(store, name, shape, vec![value; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_round_trip_preserves_layout() {
        let (c, t, h, w) = (3, 4, 2, 2);
        let vals: Vec<f64> = (0..c * t * h * w).map(|i| i as f64).collect();
        let x = Tensor::leaf(vec![c, t, h, w], vals.clone(), false).unwrap();
        let seq = to_sequence(&x).unwrap();
        assert_eq!(seq.shape(), &[t * h * w, c]);
        // Position (t=1, h=0, w=1) holds channel values x[c][1][0][1].
        let row = 1 * (h * w) + 0 * w + 1;
        let sv = seq.to_vec();
        for ci in 0..c {
            let expect = vals[ci * (t * h * w) + 1 * (h * w) + 0 * w + 1];
            assert_eq!(sv[row * c + ci], expect);
        }
        let back = to_feature_map(&seq, t, h, w).unwrap();
        assert_eq!(back.to_vec(), vals);
    }

    #[test]
    fn temporal_major_order_scans_frames_in_sequence() {
        // Channel value = frame index; every row of the sequence must equal
        // its frame number, grouped contiguously.
        let (c, t, h, w) = (2, 3, 2, 2);
        let mut vals = vec![0.0; c * t * h * w];
        for ci in 0..c {
            for ti in 0..t {
                for s in 0..h * w {
                    vals[ci * t * h * w + ti * h * w + s] = ti as f64;
                }
            }
        }
        let x = Tensor::leaf(vec![c, t, h, w], vals, false).unwrap();
        let sv = to_sequence(&x).unwrap().to_vec();
        for row in 0..t * h * w {
            let frame = row / (h * w);
            for ci in 0..c {
                assert_eq!(sv[row * c + ci], frame as f64);
            }
        }
    }

    #[test]
    fn softplus_inv_inverts_softplus() {
        for y in [0.1, 1.0, 2.0, 16.0, 40.0] {
            let x = softplus_inv(y);
            let back = if x > 30.0 { x } else { (1.0 + x.exp()).ln() };
            assert!((back - y).abs() < 1e-9, "y {y} back {back}");
        }
    }
}
