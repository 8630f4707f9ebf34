//! Gated state-space layer over flattened feature sequences.

use super::core::SsmCore;
use super::{param_full, param_normal};
use crate::nn::{ParamStore, Tensor, TensorError};

/// Pre-norm gated SSM block: two projections off a shared normalization, a
/// selective scan on one, SiLU gating by the other, then an output projection
/// with a residual added before the final normalization.
pub struct MambaLayer {
    ln_pre_g: Tensor,
    ln_pre_b: Tensor,
    lx_w: Tensor,
    lx_b: Tensor,
    lz_w: Tensor,
    lz_b: Tensor,
    lo_w: Tensor,
    lo_b: Tensor,
    ln_out_g: Tensor,
    ln_out_b: Tensor,
    pub ssm: SsmCore,
    d: usize,
}

impl MambaLayer {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d: usize,
        expand: usize,
        d_state: usize,
    ) -> Result<Self, TensorError> {
        let di = d * expand;
        let sd_in = (1.0 / d as f64).sqrt();
        let sd_out = (1.0 / di as f64).sqrt();
        Ok(Self {
            ln_pre_g: param_full(store, &format!("{prefix}.ln_pre.g"), vec![d], 1.0)?,
            ln_pre_b: param_full(store, &format!("{prefix}.ln_pre.b"), vec![d], 0.0)?,
            lx_w: param_normal(store, seed, &format!("{prefix}.lx.w"), vec![d, di], sd_in)?,
            lx_b: param_full(store, &format!("{prefix}.lx.b"), vec![di], 0.0)?,
            lz_w: param_normal(store, seed, &format!("{prefix}.lz.w"), vec![d, di], sd_in)?,
            lz_b: param_full(store, &format!("{prefix}.lz.b"), vec![di], 0.0)?,
            lo_w: param_normal(store, seed, &format!("{prefix}.lo.w"), vec![di, d], sd_out)?,
            lo_b: param_full(store, &format!("{prefix}.lo.b"), vec![d], 0.0)?,
            ln_out_g: param_full(store, &format!("{prefix}.ln_out.g"), vec![d], 1.0)?,
            ln_out_b: param_full(store, &format!("{prefix}.ln_out.b"), vec![d], 0.0)?,
            ssm: SsmCore::new(store, seed, &format!("{prefix}.ssm"), di, d_state, true)?,
        d,
        })
    }

    pub fn width(&self) -> usize {
        self.d
    }

    /// Normalized input and its two projections (scan path, gate path).
    pub(crate) fn project(&self, f: &Tensor) -> Result<(Tensor, Tensor), TensorError> {
        let fn_ = f.layer_norm(&self.ln_pre_g, &self.ln_pre_b)?;
        let x = fn_.matmul(&self.lx_w)?.add(&self.lx_b)?;
        let z = fn_.matmul(&self.lz_w)?.add(&self.lz_b)?;
        Ok((x, z))
    }

    /// Gate, project out, add the residual, and normalize.
    pub(crate) fn finish(
        &self,
        y: &Tensor,
        z: &Tensor,
        f: &Tensor,
    ) -> Result<Tensor, TensorError> {
        let gated = y.mul(&z.silu()?)?;
        let out = gated.matmul(&self.lo_w)?.add(&self.lo_b)?;
        out.add(f)?.layer_norm(&self.ln_out_g, &self.ln_out_b)
    }

    pub fn forward(&self, f: &Tensor) -> Result<Tensor, TensorError> {
        let shape = f.shape();
        if shape.len() != 2 || shape[1] != self.d {
            return Err(TensorError::ShapeMismatch {
                op: "mamba_layer",
                detail: format!("expected (L, {}), got {shape:?}", self.d),
            });
        }
        let (x, z) = self.project(f)?;
        let y = self.ssm.forward(&x)?;
        self.finish(&y, &z, f)
    }
}
