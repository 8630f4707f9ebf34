//! Dual-view fusion network: cross-view selective scans, fusion blocks, the
//! assembled model, and its training losses.

mod block;
mod cross;
mod loss;
mod net;

pub use block::FMambaBlock;
pub use cross::{CrossMambaLayer, CrossScan};
pub use loss::{freq_ce_loss, kl_psd_loss, np_loss, total_loss, LossWeights};
pub use net::F3Mamba;

use crate::nn::TensorError;
use crate::signal::BandLimits;
use crate::ssm::StemPlan;

#[derive(thiserror::Error, Debug)]
pub enum FusionError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("label waveform is constant")]
    DegenerateInput,
    #[error("label spectrum carries no in-band peak")]
    NoPulse,
}

/// Which B feeds the cross-view discretization.
///
/// `Fused` blends both views' B projections; `LiteralA` keeps the fused C
/// but discretizes the primary view's own B.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusedBMode {
    Fused,
    LiteralA,
}

/// How the two branches are combined on the way to the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    /// No fusion blocks; final branch features are averaged.
    Average,
    /// A single fusion block after the last branch stage.
    FinalOnly,
    /// One fusion block after every branch stage, residuals fed back.
    Hierarchical,
}

#[derive(Clone, Copy, Debug)]
pub struct F3MambaConfig {
    pub stem: StemPlan,
    pub d_state: usize,
    /// Inner width of the cross-view layers inside fusion blocks.
    pub cssm_dim: usize,
    pub theta: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub fused_b_mode: FusedBMode,
    pub fusion_mode: FusionMode,
    pub dropout: f64,
    pub loss: LossWeights,
    pub band: BandLimits,
    pub input_hw: usize,
    pub seed: u64,
}

pub const STAGES: usize = 3;

impl F3MambaConfig {
    /// CPU-sized profile: 16x16 inputs, width 8 everywhere.
    pub fn desk(seed: u64) -> Self {
        Self {
            stem: StemPlan::desk(8),
            d_state: 8,
            cssm_dim: 8,
            theta: 0.5,
            lambda_b: 0.5,
            lambda_c: 0.5,
            fused_b_mode: FusedBMode::Fused,
            fusion_mode: FusionMode::Hierarchical,
            dropout: 0.1,
            loss: LossWeights::default(),
            band: BandLimits::pulse(),
            input_hw: 16,
            seed,
        }
    }

    /// Reference profile: 128x128 inputs, width 64 branches, 16 states.
    pub fn full(seed: u64) -> Self {
        Self {
            stem: StemPlan::full(64),
            d_state: 16,
            cssm_dim: 64,
            input_hw: 128,
            ..Self::desk(seed)
        }
    }

    pub fn channels(&self) -> usize {
        self.stem.out_channels()
    }

    /// Spatial side length entering the branch blocks.
    pub fn branch_hw(&self) -> usize {
        self.input_hw / self.stem.total_stride()
    }

    pub fn with_fusion_mode(mut self, mode: FusionMode) -> Self {
        self.fusion_mode = mode;
        self
    }

    pub fn with_lambdas(mut self, lambda_b: f64, lambda_c: f64) -> Self {
        self.lambda_b = lambda_b;
        self.lambda_c = lambda_c;
        self
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        if self.stem.stages.iter().any(|&(c, s)| c == 0 || s == 0) {
            return bad("stem stages need nonzero channels and stride".into());
        }
        if self.d_state == 0 || self.cssm_dim == 0 {
            return bad("state and cross widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta {} outside [0, 1]", self.theta));
        }
        for (name, l) in [("lambda_b", self.lambda_b), ("lambda_c", self.lambda_c)] {
            if !(0.0..=1.0).contains(&l) {
                return bad(format!("{name} {l} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.loss.validate()?;
        if !(self.band.lo_hz > 0.0 && self.band.hi_hz > self.band.lo_hz) {
            return bad(format!(
                "band {}..{} Hz is not a positive-width pulse band",
                self.band.lo_hz, self.band.hi_hz
            ));
        }
        let stride = self.stem.total_stride();
        if self.input_hw == 0 || self.input_hw % stride != 0 {
            return bad(format!(
                "input side {} not divisible by stem stride {stride}",
                self.input_hw
            ));
        }
        // Three 2x2 pools follow the stem.
        let hw = self.input_hw / stride;
        if hw % 8 != 0 {
            return bad(format!("branch side {hw} must be a multiple of 8"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_profiles_validate() {
        F3MambaConfig::desk(7).validate().unwrap();
        F3MambaConfig::full(7).validate().unwrap();
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let mut cfg = F3MambaConfig::desk(0);
        cfg.input_hw = 12;
        assert!(matches!(cfg.validate(), Err(FusionError::InvalidConfig(_))));
        let mut cfg = F3MambaConfig::full(0);
        cfg.input_hw = 64;
        // 64 / stride 8 = 8, fine; 32 / 8 = 4 is not.
        cfg.validate().unwrap();
        cfg.input_hw = 32;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_scalars_are_rejected() {
        for patch in [
            |c: &mut F3MambaConfig| c.theta = 1.5,
            |c: &mut F3MambaConfig| c.lambda_b = -0.1,
            |c: &mut F3MambaConfig| c.dropout = 1.0,
            |c: &mut F3MambaConfig| c.band = BandLimits::new(3.0, 0.5),
        ] {
            let mut cfg = F3MambaConfig::desk(1);
            patch(&mut cfg);
            assert!(cfg.validate().is_err());
        }
    }
}
