//! Temporal-difference 3-D convolution.

use super::param_normal;
use crate::nn::{conv3d, Pad, ParamStore, Tensor, TensorError};

/// 3x3x3 convolution minus theta times a central-difference correction.
///
/// The correction is a 1x1x1 convolution whose weights are the sums of the
/// temporally adjacent kernel taps (kt = 0 and kt = 2), so a temporally
/// constant input under adjacent-tap-balanced kernels is left untouched.
/// theta = 0 skips the correction branch entirely and is bitwise identical
/// to the plain convolution.
pub struct TemporalDiffConv {
    pub(crate) weight: Tensor,
    pub(crate) bias: Tensor,
    pub theta: f64,
    c_out: usize,
    c_in: usize,
}

impl TemporalDiffConv {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        theta: f64,
    ) -> Result<Self, TensorError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(TensorError::InvalidArg("theta must lie in [0, 1]"));
        }
        let fan_in = (c_in * 27) as f64;
        let weight = param_normal(
            store,
            seed,
            &format!("{prefix}.weight"),
            vec![c_out, c_in, 3, 3, 3],
            (2.0 / fan_in).sqrt(),
        )?;
        let bias = super::param_full(store, &format!("{prefix}.bias"), vec![c_out], 0.0)?;
        Ok(Self {
            weight,
            bias,
            theta,
            c_out,
            c_in,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let s = x.shape();
        if s.len() != 4 || s[0] != self.c_in || s[1] < 3 {
            return Err(TensorError::ShapeMismatch {
                op: "tdc",
                detail: format!(
                    "expected ({}, T>=3, H, W), got {s:?}",
                    self.c_in
                ),
            });
        }
        let base = conv3d(x, &self.weight, Some(&self.bias), 1, Pad::Same)?;
        if self.theta == 0.0 {
            return Ok(base);
        }
        let adjacent = self
            .weight
            .slice(2, 0, 1)?
            .add(&self.weight.slice(2, 2, 3)?)?;
        let cd_weight = adjacent
            .sum_trailing(3)?
            .reshape(vec![self.c_out, self.c_in, 1, 1, 1])?;
        let correction = conv3d(x, &cd_weight, None, 1, Pad::Same)?;
        base.sub(&correction.scale(self.theta)?)
    }
}
