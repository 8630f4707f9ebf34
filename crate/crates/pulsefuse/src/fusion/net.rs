//! The assembled dual-view network.

use super::block::FMambaBlock;
use super::{F3MambaConfig, FusionError, FusionMode, STAGES};
use crate::nn::{avgpool_spatial_to1, conv3d, Pad, ParamStore, Tensor, TensorError};
use crate::ssm::{param_full, param_normal, BranchBlock, Stem};

/// Two stem-plus-branch towers (face, finger) tied together by fusion blocks,
/// ending in a spatial pool and a 1x1x1 conv that reads out one PPG sample
/// per input frame.
pub struct F3Mamba {
    pub cfg: F3MambaConfig,
    stem_face: Stem,
    stem_finger: Stem,
    blocks_face: Vec<BranchBlock>,
    blocks_finger: Vec<BranchBlock>,
    fusions: Vec<Option<FMambaBlock>>,
    head_w: Tensor,
    head_b: Tensor,
}

impl F3Mamba {
    pub fn new(store: &mut ParamStore, cfg: &F3MambaConfig) -> Result<Self, FusionError> {
        cfg.validate()?;
        let c = cfg.channels();
        let stem_face = Stem::new(store, cfg.seed, "face.stem", 3, cfg.stem)?;
        let stem_finger = Stem::new(store, cfg.seed, "finger.stem", 3, cfg.stem)?;
        let mut blocks_face = Vec::with_capacity(STAGES);
        let mut blocks_finger = Vec::with_capacity(STAGES);
        let mut fusions = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            blocks_face.push(BranchBlock::new(
                store,
                cfg.seed,
                &format!("face.block{i}"),
                c,
                cfg.d_state,
                cfg.theta,
            )?);
            blocks_finger.push(BranchBlock::new(
                store,
                cfg.seed,
                &format!("finger.block{i}"),
                c,
                cfg.d_state,
                cfg.theta,
            )?);
            let wanted = match cfg.fusion_mode {
                FusionMode::Hierarchical => true,
                FusionMode::FinalOnly => i + 1 == STAGES,
                FusionMode::Average => false,
            };
            fusions.push(if wanted {
                Some(FMambaBlock::new(
                    store,
                    cfg.seed,
                    &format!("fuse{i}"),
                    c,
                    cfg.cssm_dim,
                    cfg.d_state,
                    cfg.lambda_b,
                    cfg.lambda_c,
                    cfg.fused_b_mode,
                    cfg.dropout,
                )?)
            } else {
                None
            });
        }
        let head_w = param_normal(
            store,
            cfg.seed,
            "head.w",
            vec![1, c, 1, 1, 1],
            (1.0 / c as f64).sqrt(),
        )?;
        let head_b = param_full(store, "head.b", vec![1], 0.0)?;
        Ok(Self {
            cfg: *cfg,
            stem_face,
            stem_finger,
            blocks_face,
            blocks_finger,
            fusions,
            head_w,
            head_b,
        })
    }

    fn check_input(&self, name: &str, x: &Tensor) -> Result<(), TensorError> {
        let s = x.shape();
        let hw = self.cfg.input_hw;
        if s.len() != 4 || s[0] != 3 || s[2] != hw || s[3] != hw {
            return Err(TensorError::ShapeMismatch {
                op: "f3mamba",
                detail: format!("{name} view expected (3, T, {hw}, {hw}), got {s:?}"),
            });
        }
        Ok(())
    }

    /// One PPG sample per input frame. `step` seeds the dropout masks and
    /// only matters when `train` is set.
    pub fn forward(
        &self,
        face: &Tensor,
        finger: &Tensor,
        train: bool,
        step: u64,
    ) -> Result<Tensor, TensorError> {
        self.check_input("face", face)?;
        self.check_input("finger", finger)?;
        if face.shape()[1] != finger.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "f3mamba",
                detail: format!(
                    "views disagree on frame count: {} vs {}",
                    face.shape()[1],
                    finger.shape()[1]
                ),
            });
        }
        let mut fa = self.stem_face.forward(face)?;
        let mut fb = self.stem_finger.forward(finger)?;
        let mut fused_final = None;
        for i in 0..STAGES {
            fa = self.blocks_face[i].forward(&fa)?;
            fb = self.blocks_finger[i].forward(&fb)?;
            if let Some(block) = &self.fusions[i] {
                let (na, nb, fused) = block.forward(&fa, &fb, train, step)?;
                // The last fused map goes straight to the head; earlier ones
                // feed back into both branches.
                if i + 1 < STAGES {
                    fa = na;
                    fb = nb;
                }
                fused_final = Some(fused);
            }
        }
        let fused = match fused_final {
            Some(f) => f,
            None => fa.add(&fb)?.scale(0.5)?,
        };
        let pooled = avgpool_spatial_to1(&fused)?;
        let y = conv3d(&pooled, &self.head_w, Some(&self.head_b), 1, Pad::Same)?;
        let t = y.shape()[1];
        y.reshape(vec![t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::loss::total_loss;
    use crate::fusion::LossWeights;
    use crate::nn::{grad_check, splitmix64};
    use crate::signal::BandLimits;
    use crate::ssm::StemPlan;

    fn rand_vals(n: usize, key: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (splitmix64(key + i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            .collect()
    }

    fn tiny_cfg(seed: u64) -> F3MambaConfig {
        let mut cfg = F3MambaConfig::desk(seed);
        cfg.stem = StemPlan::desk(2);
        cfg.d_state = 2;
        cfg.cssm_dim = 2;
        cfg.input_hw = 8;
        cfg
    }

    fn views(t: usize, hw: usize, key: u64) -> (Tensor, Tensor) {
        let n = 3 * t * hw * hw;
        (
            Tensor::leaf(vec![3, t, hw, hw], rand_vals(n, key), false).unwrap(),
            Tensor::leaf(vec![3, t, hw, hw], rand_vals(n, key + 1), false).unwrap(),
        )
    }

    #[test]
    fn emits_one_sample_per_frame() {
        let mut store = ParamStore::new();
        let m = F3Mamba::new(&mut store, &tiny_cfg(3)).unwrap();
        let (face, finger) = views(6, 8, 10);
        let y = m.forward(&face, &finger, false, 0).unwrap();
        assert_eq!(y.shape(), &[6]);
        assert!(y.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_rebuild_reproduces_outputs() {
        let cfg = tiny_cfg(17);
        let (face, finger) = views(5, 8, 30);
        let mut s1 = ParamStore::new();
        let y1 = F3Mamba::new(&mut s1, &cfg)
            .unwrap()
            .forward(&face, &finger, false, 0)
            .unwrap();
        let mut s2 = ParamStore::new();
        let y2 = F3Mamba::new(&mut s2, &cfg)
            .unwrap()
            .forward(&face, &finger, false, 0)
            .unwrap();
        assert_eq!(y1.to_vec(), y2.to_vec());
    }

    #[test]
    fn eval_ignores_step_but_training_does_not() {
        let mut store = ParamStore::new();
        let m = F3Mamba::new(&mut store, &tiny_cfg(23)).unwrap();
        let (face, finger) = views(5, 8, 50);
        let e0 = m.forward(&face, &finger, false, 0).unwrap().to_vec();
        let e1 = m.forward(&face, &finger, false, 7).unwrap().to_vec();
        assert_eq!(e0, e1);
        let t0 = m.forward(&face, &finger, true, 0).unwrap().to_vec();
        let t1 = m.forward(&face, &finger, true, 1).unwrap().to_vec();
        assert!(t0.iter().zip(&t1).any(|(a, b)| a != b));
    }

    #[test]
    fn fusion_mode_governs_which_blocks_exist() {
        let has = |store: &ParamStore, prefix: &str| {
            store.iter().any(|(n, _)| n.starts_with(prefix))
        };
        let mut avg = ParamStore::new();
        F3Mamba::new(&mut avg, &tiny_cfg(1).with_fusion_mode(FusionMode::Average)).unwrap();
        assert!(!has(&avg, "fuse"));
        let mut last = ParamStore::new();
        F3Mamba::new(&mut last, &tiny_cfg(1).with_fusion_mode(FusionMode::FinalOnly)).unwrap();
        assert!(!has(&last, "fuse0") && !has(&last, "fuse1") && has(&last, "fuse2"));
        let mut hier = ParamStore::new();
        F3Mamba::new(&mut hier, &tiny_cfg(1)).unwrap();
        assert!(has(&hier, "fuse0") && has(&hier, "fuse1") && has(&hier, "fuse2"));
        assert!(avg.scalar_count() < last.scalar_count());
        assert!(last.scalar_count() < hier.scalar_count());
    }

    #[test]
    fn every_mode_runs_forward() {
        for mode in [FusionMode::Average, FusionMode::FinalOnly, FusionMode::Hierarchical] {
            let mut store = ParamStore::new();
            let m = F3Mamba::new(&mut store, &tiny_cfg(4).with_fusion_mode(mode)).unwrap();
            let (face, finger) = views(4, 8, 70);
            let y = m.forward(&face, &finger, false, 0).unwrap();
            assert_eq!(y.shape(), &[4]);
        }
    }

    #[test]
    fn rejects_wrong_geometry() {
        let mut store = ParamStore::new();
        let m = F3Mamba::new(&mut store, &tiny_cfg(5)).unwrap();
        let (face, _) = views(4, 8, 80);
        let (bad, _) = views(4, 16, 81);
        assert!(m.forward(&face, &bad, false, 0).is_err());
        let (short, _) = views(3, 8, 82);
        let (long, _) = views(4, 8, 83);
        assert!(m.forward(&short, &long, false, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences_through_the_loss() {
        let cfg = tiny_cfg(29);
        let mut store = ParamStore::new();
        let m = F3Mamba::new(&mut store, &cfg).unwrap();
        let t = 4;
        let (face, finger) = views(t, 8, 90);
        let label: Vec<f64> = (0..t)
            .map(|i| (2.0 * std::f64::consts::PI * 1.2 * i as f64 / 30.0).sin())
            .collect();
        let params: Vec<Tensor> = store.iter().map(|(_, p)| p.clone()).collect();
        let report = grad_check(
            "f3mamba_total_loss",
            |_| {
                let pred = m.forward(&face, &finger, true, 0)?;
                total_loss(
                    &pred,
                    &label,
                    30.0,
                    BandLimits::pulse(),
                    &LossWeights::default(),
                )
                .map_err(|_| TensorError::InvalidArg("loss rejected the label"))
            },
            &params,
            1e-6,
            Some((60, 12)),
        )
        .unwrap();
        // The spectral cross-entropy can put steep curvature behind single
        // coordinates, so the composite check carries a looser bar than the
        // per-primitive 1e-6 one.
        assert!(
            report.passes(1e-3),
            "max_err {:.3e} at {:?}",
            report.max_err,
            report.worst
        );
    }
}

#[cfg(test)]
mod timing {
    use super::tests_support_timing::*;

    #[test]
    #[ignore]
    fn desk_step_probe() {
        probe();
    }
}
