//! Symmetric cross-view fusion block.

use super::cross::CrossMambaLayer;
use super::FusedBMode;
use crate::nn::{conv3d, DropKey, Pad, ParamStore, Tensor, TensorError};
use crate::ssm::{param_full, param_normal, to_feature_map, to_sequence};

/// Runs a cross Mamba layer in each direction, fuses the summed outputs with
/// a 1x1x1 conv, and adds the fused map back onto both branches.
pub struct FMambaBlock {
    ab: CrossMambaLayer,
    ba: CrossMambaLayer,
    fuse_w: Tensor,
    fuse_b: Tensor,
    dropout: f64,
    seed: u64,
    key: String,
}

impl FMambaBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d: usize,
        d_inner: usize,
        d_state: usize,
        lambda_b: f64,
        lambda_c: f64,
        mode: FusedBMode,
        dropout: f64,
    ) -> Result<Self, TensorError> {
        let sd = (1.0 / d as f64).sqrt();
        Ok(Self {
            ab: CrossMambaLayer::new(
                store,
                seed,
                &format!("{prefix}.ab"),
                d,
                d_inner,
                d_state,
                lambda_b,
                lambda_c,
                mode,
            )?,
            ba: CrossMambaLayer::new(
                store,
                seed,
                &format!("{prefix}.ba"),
                d,
                d_inner,
                d_state,
                lambda_b,
                lambda_c,
                mode,
            )?,
            fuse_w: param_normal(
                store,
                seed,
                &format!("{prefix}.fuse.w"),
                vec![d, d, 1, 1, 1],
                sd,
            )?,
            fuse_b: param_full(store, &format!("{prefix}.fuse.b"), vec![d], 0.0)?,
            dropout,
            seed,
            key: prefix.to_string(),
        })
    }

    /// Returns (face residual output, finger residual output, fused map).
    pub fn forward(
        &self,
        fa: &Tensor,
        fb: &Tensor,
        train: bool,
        step: u64,
    ) -> Result<(Tensor, Tensor, Tensor), TensorError> {
        let s = fa.shape().to_vec();
        if fb.shape() != s.as_slice() {
            return Err(TensorError::ShapeMismatch {
                op: "f_mamba_block",
                detail: format!("branch shapes {:?} vs {:?}", s, fb.shape()),
            });
        }
        let sa = to_sequence(fa)?;
        let sb = to_sequence(fb)?;
        let tab = self.ab.forward(&sa, &sb)?;
        let tba = self.ba.forward(&sb, &sa)?;
        let fm = to_feature_map(&tab.add(&tba)?, s[1], s[2], s[3])?;
        let fused = conv3d(&fm, &self.fuse_w, Some(&self.fuse_b), 1, Pad::Same)?;
        let fused = fused.dropout(self.dropout, DropKey::new(self.seed, &self.key, step), train)?;
        Ok((fa.add(&fused)?, fb.add(&fused)?, fused))
    }
}
