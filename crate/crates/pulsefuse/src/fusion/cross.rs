//! Cross-view selective scan and the gated layer around it.

use super::FusedBMode;
use crate::nn::{scan, ParamStore, Tensor, TensorError};
use crate::ssm::{param_full, param_normal, SsmCore};

/// Selective scan over a primary stream whose input/output projections are
/// convex blends of the primary and complement views.
///
/// The timescale comes from the primary stream alone, so the complement can
/// reshape what gets written and read without retiming the recurrence.
pub struct CrossScan {
    pub core: SsmCore,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub mode: FusedBMode,
}

impl CrossScan {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d: usize,
        n: usize,
        lambda_b: f64,
        lambda_c: f64,
        mode: FusedBMode,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            core: SsmCore::new(store, seed, prefix, d, n, true)?,
            lambda_b,
            lambda_c,
            mode,
        })
    }

    /// Blend `pa` toward `pb`; lambda 0 short-circuits so the single-view
    /// path stays bit-identical.
    fn blend(pa: Tensor, pb: &Tensor, lambda: f64) -> Result<Tensor, TensorError> {
        if lambda == 0.0 {
            return Ok(pa);
        }
        pa.scale(1.0 - lambda)?.add(&pb.scale(lambda)?)
    }

    pub fn forward(&self, xa: &Tensor, xb: &Tensor) -> Result<Tensor, TensorError> {
        if xa.shape() != xb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_scan",
                detail: format!("views {:?} vs {:?}", xa.shape(), xb.shape()),
            });
        }
        let delta = self.core.delta_of(xa)?;
        let b = match self.mode {
            FusedBMode::Fused => {
                Self::blend(self.core.b_of(xa)?, &self.core.b_of(xb)?, self.lambda_b)?
            }
            FusedBMode::LiteralA => self.core.b_of(xa)?,
        };
        let c = Self::blend(self.core.c_of(xa)?, &self.core.c_of(xb)?, self.lambda_c)?;
        let y = scan(xa, &delta, &self.core.a_neg()?, &b, &c)?;
        self.core.apply_skip(y, xa)
    }
}

/// One direction of a fusion block: pre-norm, shared input projection over
/// both views, cross scan on the primary, SiLU gate, output projection with a
/// residual, post-norm. Mirrors the single-view gated layer with the scan
/// swapped for the cross-view one.
pub struct CrossMambaLayer {
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
    pub scan: CrossScan,
    d: usize,
}

impl CrossMambaLayer {
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
    ) -> Result<Self, TensorError> {
        let sd_in = (1.0 / d as f64).sqrt();
        let sd_out = (1.0 / d_inner as f64).sqrt();
        Ok(Self {
            ln_pre_g: param_full(store, &format!("{prefix}.ln_pre.g"), vec![d], 1.0)?,
            ln_pre_b: param_full(store, &format!("{prefix}.ln_pre.b"), vec![d], 0.0)?,
            lx_w: param_normal(store, seed, &format!("{prefix}.lx.w"), vec![d, d_inner], sd_in)?,
            lx_b: param_full(store, &format!("{prefix}.lx.b"), vec![d_inner], 0.0)?,
            lz_w: param_normal(store, seed, &format!("{prefix}.lz.w"), vec![d, d_inner], sd_in)?,
            lz_b: param_full(store, &format!("{prefix}.lz.b"), vec![d_inner], 0.0)?,
            lo_w: param_normal(store, seed, &format!("{prefix}.lo.w"), vec![d_inner, d], sd_out)?,
            lo_b: param_full(store, &format!("{prefix}.lo.b"), vec![d], 0.0)?,
            ln_out_g: param_full(store, &format!("{prefix}.ln_out.g"), vec![d], 1.0)?,
            ln_out_b: param_full(store, &format!("{prefix}.ln_out.b"), vec![d], 0.0)?,
            scan: CrossScan::new(
                store,
                seed,
                &format!("{prefix}.cssm"),
                d_inner,
                d_state,
                lambda_b,
                lambda_c,
                mode,
            )?,
            d,
        })
    }

    /// `fp` is the primary (residual) stream, `fc` the complement; both are
    /// (L, d) flattened feature sequences.
    pub fn forward(&self, fp: &Tensor, fc: &Tensor) -> Result<Tensor, TensorError> {
        for (name, f) in [("primary", fp), ("complement", fc)] {
            let s = f.shape();
            if s.len() != 2 || s[1] != self.d {
                return Err(TensorError::ShapeMismatch {
                    op: "cross_mamba",
                    detail: format!("{name} expected (L, {}), got {s:?}", self.d),
                });
            }
        }
        let np = fp.layer_norm(&self.ln_pre_g, &self.ln_pre_b)?;
        let nc = fc.layer_norm(&self.ln_pre_g, &self.ln_pre_b)?;
        let xp = np.matmul(&self.lx_w)?.add(&self.lx_b)?;
        let xc = nc.matmul(&self.lx_w)?.add(&self.lx_b)?;
        let z = np.matmul(&self.lz_w)?.add(&self.lz_b)?;
        let y = self.scan.forward(&xp, &xc)?;
        let out = y.mul(&z.silu()?)?.matmul(&self.lo_w)?.add(&self.lo_b)?;
        out.add(fp)?.layer_norm(&self.ln_out_g, &self.ln_out_b)
    }
}
