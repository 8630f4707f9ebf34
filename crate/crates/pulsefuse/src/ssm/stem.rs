//! Per-view convolutional stem.

use super::{param_full, param_normal};
use crate::nn::{conv3d, Pad, ParamStore, Tensor, TensorError};

/// Channel and spatial-stride plan for the three stem stages.
///
/// Strides multiply to the total spatial reduction before the branch; the
/// full-scale plan reduces 128x128 inputs to 16x16, the desk plan leaves
/// 16x16 inputs untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StemPlan {
    pub stages: [(usize, usize); 3],
}

impl StemPlan {
    pub fn full(c: usize) -> Self {
        Self {
            stages: [(c / 4, 2), (c / 2, 2), (c, 2)],
        }
    }

    pub fn desk(c: usize) -> Self {
        Self {
            stages: [(c, 1), (c, 1), (c, 1)],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.stages[2].0
    }

    pub fn total_stride(&self) -> usize {
        self.stages.iter().map(|(_, s)| s).product()
    }
}

struct StemStage {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
}

/// Three conv3d + SiLU stages mapping raw frames to branch features.
pub struct Stem {
    stages: Vec<StemStage>,
    in_channels: usize,
}

impl Stem {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        in_channels: usize,
        plan: StemPlan,
    ) -> Result<Self, TensorError> {
        let mut stages = Vec::with_capacity(3);
        let mut c_in = in_channels;
        for (i, &(c_out, stride)) in plan.stages.iter().enumerate() {
            if c_out == 0 || stride == 0 {
                return Err(TensorError::InvalidArg("stem stage needs channels and stride"));
            }
            let fan_in = (c_in * 27) as f64;
            let weight = param_normal(
                store,
                seed,
                &format!("{prefix}.{i}.weight"),
                vec![c_out, c_in, 3, 3, 3],
                (2.0 / fan_in).sqrt(),
            )?;
            let bias = param_full(store, &format!("{prefix}.{i}.bias"), vec![c_out], 0.0)?;
            stages.push(StemStage {
                weight,
                bias,
                stride,
            });
            c_in = c_out;
        }
        Ok(Self {
            stages,
            in_channels,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let s = x.shape();
        if s.len() != 4 || s[0] != self.in_channels {
            return Err(TensorError::ShapeMismatch {
                op: "stem",
                detail: format!("expected ({}, T, H, W), got {s:?}", self.in_channels),
            });
        }
        let mut cur = x.clone();
        for stage in &self.stages {
            cur = conv3d(&cur, &stage.weight, Some(&stage.bias), stage.stride, Pad::Same)?
                .silu()?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, splitmix64};

    fn rand_vals(n: usize, key: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (splitmix64(key + i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            .collect()
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut store = ParamStore::new();
        let stem = Stem::new(&mut store, 3, "stem", 3, StemPlan::desk(8)).unwrap();
        let x = Tensor::leaf(vec![3, 4, 4, 4], vec![0.0; 3 * 64], false).unwrap();
        let out = stem.forward(&x).unwrap();
        assert!(out.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn desk_plan_preserves_spatial_dims() {
        let mut store = ParamStore::new();
        let stem = Stem::new(&mut store, 3, "stem", 3, StemPlan::desk(8)).unwrap();
        let x = Tensor::leaf(vec![3, 10, 16, 16], rand_vals(3 * 10 * 256, 7), false).unwrap();
        let out = stem.forward(&x).unwrap();
        assert_eq!(out.shape(), &[8, 10, 16, 16]);
    }

    #[test]
    fn full_plan_reduces_spatial_by_eight() {
        let mut store = ParamStore::new();
        let plan = StemPlan::full(64);
        assert_eq!(plan.total_stride(), 8);
        let stem = Stem::new(&mut store, 3, "stem", 3, plan).unwrap();
        let x = Tensor::leaf(vec![3, 2, 32, 32], rand_vals(3 * 2 * 1024, 8), false).unwrap();
        let out = stem.forward(&x).unwrap();
        assert_eq!(out.shape(), &[64, 2, 4, 4]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let stem = Stem::new(
            &mut store,
            5,
            "stem",
            2,
            StemPlan {
                stages: [(3, 1), (3, 2), (4, 1)],
            },
        )
        .unwrap();
        let x = Tensor::leaf(vec![2, 4, 4, 4], rand_vals(2 * 64, 60), true).unwrap();
        let mut inputs: Vec<Tensor> = store.iter().map(|(_, p)| p.clone()).collect();
        inputs.push(x.clone());
        let report = grad_check(
            "stem",
            |_| {
                let y = stem.forward(&x)?;
                y.mul(&y)?.mean()
            },
            &inputs,
            1e-5,
            Some((150, 9)),
        )
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }
}
